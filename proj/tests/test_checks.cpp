#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lmpseq/checks.hpp"

using namespace lmpseq;
using Catch::Approx;

namespace {
DiscreteStage two_point() { return DiscreteStage({-1.0, 1.0}, {0.5, 0.5}, {-0.5, 0.5}); }
DiscreteStage three_point() { return DiscreteStage({-1.0, 0.0, 2.0}, {0.3, 0.4, 0.3}, {-0.3, 0.0, 0.3}); }

struct Fixture {
  ObservationModel model;
  RecursionOutput rec;
  TestDesign design;
};

Fixture make(const Stage& s, std::size_t N, double b, double c) {
  auto m = ObservationModel::iid(0.0, s);
  auto rec = backward_induction(m, N, c, ExpectationOperator::exact());
  auto d = make_design(m, assemble_regions(rec, b));
  return {std::move(m), std::move(rec), std::move(d)};
}
}  // namespace

TEST_CASE("report relations and slack", "[checks]") {
  const auto le = make_report("x", "i", 1.0, Relation::less_equal, 2.0, 0.0);
  CHECK(le.pass);
  CHECK(le.slack == Approx(1.0));
  CHECK_FALSE(make_report("x", "i", 2.0, Relation::less_equal, 1.0, 0.5).pass);
  CHECK(make_report("x", "i", 1.0, Relation::equal, 1.0 + 1e-13, 1e-12).pass);
  CHECK_FALSE(make_report("x", "i", 1.0, Relation::equal, 1.1, 1e-12).pass);
  CHECK(make_report("x", "i", 3.0, Relation::greater_equal, 2.0, 0.0).pass);
}

TEST_CASE("exact identities on a truncated design", "[checks][property]") {
  const auto f = make(three_point(), 4, 0.7, 0.05);
  const auto t = truncated_test(f.design);
  const auto& s = std::get<DiscreteStage>(f.model.stage(1));
  for (double th : {0.0, 0.2, -0.3}) {
    CHECK(wald_identity_check(f.model, t, [](std::size_t, std::size_t) { return 1.0; }, th, "one").pass);
    CHECK(wald_identity_check(f.model, t, [&](std::size_t, std::size_t i) { return std::abs(s.score(i)); },
                              th, "abs")
              .pass);
    CHECK(wald_identity_check(f.model, t, [&](std::size_t j, std::size_t i) { return j * s.score(i) * s.score(i); },
                              th, "sq")
              .pass);
    if (th != 0.0) CHECK(kl_decomposition_check(f.model, t, th, "kl").pass);
  }
}

TEST_CASE("wald identity with a fixed sample size", "[checks]") {
  const auto f = make(two_point(), 3, 0.0, 0.1);
  TruncatedTest t = truncated_test(f.design);
  TruncatedTest longer = t;
  longer.continues = [](const HistoryView&) { return true; };
  const auto ok = wald_identity_check(f.model, longer, [](std::size_t, std::size_t) { return 1.0; }, 0.0, "all");
  CHECK(ok.pass);
  CHECK(ok.lhs == Approx(3.0));
}

TEST_CASE("jensen with the log ratio", "[checks]") {
  const auto f = make(two_point(), 3, 0.0, 0.1);
  const auto t = truncated_test(f.design);
  const double th = 0.4;
  const auto rep = jensen_check(
      f.model, t, [](double x) { return -std::log(x); }, [](const HistoryView&) { return 1.0; },
      [&](const HistoryView& h) { return std::exp(-history_log_ratio(f.model, h, th)); }, "lr");
  CHECK(rep.pass);
  // E_theta0 of the likelihood ratio over stopped histories is one
  CHECK(rep.rhs == Approx(0.0).margin(1e-14));
}

TEST_CASE("inequality envelope on exact characteristics", "[checks][property]") {
  for (const auto& st : {Stage{two_point()}, Stage{three_point()}}) {
    for (double b : {-0.5, 0.0, 0.7}) {
      const auto f = make(st, 4, b, 0.05);
      const std::vector<double> thetas{0.1, 0.3, -0.2};
      const auto ch = exact_characteristics(f.design, f.model, thetas);
      const auto k = estimate_assumption_constants(f.model, 0.5, thetas);
      for (double th : thetas) {
        const auto [lo, up] = info_inequality_check(ch, th, k.gamma1, "fx");
        CHECK(lo.pass);
        CHECK(up.pass);
      }
      CHECK(derivative_bound_check(ch, k.gamma1, "fx").pass);
    }
  }
}

TEST_CASE("power derivative matches central differences", "[checks]") {
  auto m = ObservationModel::iid(0.5, DiscreteStage::bernoulli(0.5));
  const auto rec = backward_induction(m, 3, 0.2, ExpectationOperator::exact());
  const auto d = make_design(m, assemble_regions(rec, -0.5));
  for (const auto& r : derivative_formula_check(m, truncated_test(d), {1e-1, 1e-2, 1e-3}, "bern")) {
    INFO(describe(r));
    CHECK(r.pass);
  }
}

TEST_CASE("a shifted boundary fails the residual check", "[checks]") {
  const auto f = make(three_point(), 4, 0.7, 0.05);
  auto regions = f.design.regions;
  for (const auto& r : boundary_checks(regions, f.rec, 1e-10, "ok")) CHECK(r.pass);
  for (auto& s : regions.stages) {
    if (s.interval) s.interval->upper += 0.05;
  }
  const auto bad = boundary_checks(regions, f.rec, 1e-10, "bad");
  CHECK_FALSE(bad[0].pass);
  CHECK(bad[0].name == "boundary_residual");
}

TEST_CASE("value laws pass on recursions", "[checks]") {
  const auto f = make(three_point(), 5, 0.7, 0.02);
  CHECK(value_law_check(f.rec, 1e-9, "fx").pass);
}
