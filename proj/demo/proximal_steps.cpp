// One resolvent step for a few catalog functionals, with the Ekeland
// acceptance flags and the slope bound at the new point.

#include "mmflow/resolvent.hpp"
#include "mmflow/spaces.hpp"

#include <iostream>

int main() {
  using namespace mmflow;
  auto R2 = std::make_shared<EuclideanSpace>(2);
  auto R1 = std::make_shared<EuclideanSpace>(1);
  Eigen::MatrixXd A(2, 2);
  A << 2.0, 0.5, 0.5, 1.0;

  struct Case {
    std::string label;
    FunctionalHandle f;
    SpaceHandle X;
    Point x;
  };
  std::vector<Case> cases = {
      {"quadratic", std::make_shared<QuadraticFunctional>(A, Vector::Zero(2)), R2, Point::Constant(2, 1.0)},
      {"abs", std::make_shared<AbsNormFunctional>(1.0), R2, (Point(2) << 0.3, -2.0).finished()},
      {"neg-sqrt", std::make_shared<NegSqrtFunctional>(), R1, Point::Constant(1, 0.0)},
  };

  SolverConfig cfg;
  for (const auto& c : cases) {
    for (double eta : {0.0, 0.1}) {
      const auto r = solve_resolvent(*c.f, *c.X, 0.5, eta, c.x, cfg);
      std::cout << c.label << " eta=" << eta << " J x = " << r.point.transpose() << "  closed_form=" << r.closed_form
                << " accepted=" << (r.accepted_90 && r.accepted_90bis) << '\n';
      write_report(std::cout, slope_bound_check(*c.f, *c.X, 0.5, eta, c.x, r));
    }
  }
  return 0;
}
