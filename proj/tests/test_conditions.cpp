#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "preflab/conditions.hpp"
#include "preflab/instance.hpp"
#include "preflab/rng.hpp"

using namespace preflab;

namespace {

const InstanceBundle& planted() {
  static InstanceBundle bundle = generate_instance(InstanceSizes{}, 1.0, 5);
  return bundle;
}

}  // namespace

TEST_CASE("shared-level-set check: agreement, violations, symmetry") {
  MatrixXd a(3, 2), b(3, 2);
  a << 0.5, 0.5, 0.5, 0.5, 0.2, 0.8;  // prompts {0,1} merged
  b << 0.5, 0.5, 0.5, 0.5, 0.3, 0.7;  // same partition, different values
  SharedLevelSetReport rep =
      check_shared_level_sets(TabularPolicy::checked(a), TabularPolicy::checked(b));
  CHECK(rep.pass);
  b(1, 0) = 0.4;  // p2 now separates {0,1} while p1 merges them
  b(1, 1) = 0.6;
  rep = check_shared_level_sets(TabularPolicy::checked(a), TabularPolicy::checked(b));
  CHECK_FALSE(rep.pass);
  CHECK(rep.x1 == 0);
  CHECK(rep.x2 == 1);
  CHECK(rep.direction == "p1");
  CHECK(rep.worst_violation > 0.0);
  SharedLevelSetReport flipped =
      check_shared_level_sets(TabularPolicy::checked(b), TabularPolicy::checked(a));
  CHECK_FALSE(flipped.pass);
  CHECK(flipped.x1 == rep.x1);
  CHECK(flipped.x2 == rep.x2);
}

TEST_CASE("lipschitz ratio: exact values in degenerate configurations") {
  const InstanceBundle& b = planted();
  LevelSetIndex ls = build_level_sets(b.fp);
  // identical policies: exactly 1
  CHECK(estimate_lipschitz_diff(evaluate_policy(b.fp), b.fp, ls) == 1.0);
  // a single class: 0 by convention
  FactorizedPolicy mono = b.fp;
  for (int x = 0; x < mono.num_prompts(); ++x) mono.tau.row(x) = b.fp.tau.row(0);
  LevelSetIndex single = build_level_sets(mono);
  REQUIRE(single.num_classes() == 1);
  TabularPolicy constant_target{evaluate_policy(mono).table};
  CHECK(estimate_lipschitz_diff(constant_target, mono, single) == 0.0);
  // target not constant on a class: the map is ill defined
  TabularPolicy broken = b.true_policy;
  LevelSetIndex full = build_level_sets(b.fp);
  int victim = -1;
  for (const auto& cls : full.members)
    if (cls.size() >= 2) victim = cls[1];
  REQUIRE(victim >= 0);
  broken.table(victim, 0) = broken.table(victim, 0) * 0.5;
  broken.table(victim, 1) += broken.table(victim, 0);
  CHECK_THROWS_AS(estimate_lipschitz_diff(broken, b.fp, full), IllDefinedMapError);
}

TEST_CASE("planted instances pass every check; break fixtures fail exactly one") {
  const InstanceBundle& b = planted();
  ConditionReport rep = run_condition_checks(b.true_policy, b.fp, ConditionCheckConfig{});
  CHECK(rep.overall);
  CHECK(rep.shared_level_sets.pass);
  CHECK(rep.image_inclusion.pass);
  CHECK(rep.encoding.injective);
  CHECK(rep.lipschitz_diff.pass);
  CHECK(rep.lipschitz_diff.estimate < rep.lipschitz_diff.threshold);

  for (int which : {1, 2, 4}) {
    InstanceBundle broken = break_condition(b, which, derive_seed(99, which));
    const ConditionReport& r = broken.certificates;
    CHECK_FALSE(r.overall);
    CHECK(r.shared_level_sets.pass == (which != 1));
    CHECK(r.image_inclusion.pass == (which != 2));
    CHECK(r.encoding.injective);
    CHECK(r.lipschitz_diff.pass == (which != 4));
  }
}

TEST_CASE("condition report JSON round trip") {
  const InstanceBundle& b = planted();
  ConditionReport rep = run_condition_checks(b.true_policy, b.fp, ConditionCheckConfig{});
  nlohmann::json j = report_to_json(rep);
  ConditionReport back = report_from_json(j);
  CHECK(back.overall == rep.overall);
  CHECK(back.shared_level_sets.pass == rep.shared_level_sets.pass);
  CHECK(back.image_inclusion.worst_residual == rep.image_inclusion.worst_residual);
  CHECK(back.encoding.sigma_min == rep.encoding.sigma_min);
  CHECK(back.encoding.l_phi == rep.encoding.l_phi);
  CHECK(back.lipschitz_diff.estimate == rep.lipschitz_diff.estimate);
  CHECK(back.lipschitz_diff.threshold == rep.lipschitz_diff.threshold);
}
