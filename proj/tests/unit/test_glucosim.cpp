#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "rlpi/glucosim.hpp"
#include "rlpi/harness.hpp"

namespace rlpi::glucosim {
namespace {

PatientParams adult() { return make_cohort(Cohort::kT1Adult, 1, 3).front(); }

TEST(PatientStep, EquilibriumIsInvariant) {
  const PatientParams p = adult();
  PatientState s = equilibrium(p);
  const PatientState s0 = s;
  double worst = 0.0;
  for (int k = 0; k < kTicksPerDay; ++k) {
    s = patient_step(p, s, 0.0, 0.0, Intensity::kNone);
    worst = std::max(worst, std::abs(s.G - p.basal_glucose));
  }
  EXPECT_LE(worst, 0.01);
  EXPECT_NEAR(s.G, s0.G, 1e-6 * s0.G);
}

TEST(PatientStep, HoldingInfusionKeepsSteadyState) {
  const PatientParams p = adult();
  PatientState s = steady_state_at(p, 110.0);
  const double dose = holding_dose(p, 110.0);
  ASSERT_GT(dose, 0.0);
  for (int k = 0; k < kTicksPerDay; ++k) s = patient_step(p, s, dose, 0.0, Intensity::kNone);
  EXPECT_NEAR(s.G, 110.0, 0.01);
}

TEST(PatientStep, BolusLowersGlucose) {
  const PatientParams p = adult();
  PatientState s = patient_step(p, equilibrium(p), 2.0, 0.0, Intensity::kNone);
  double prev = s.G;
  double lowest = s.G;
  for (int k = 0; k < 36; ++k) {
    s = patient_step(p, s, 0.0, 0.0, Intensity::kNone);
    if (k < 24) EXPECT_LT(s.G, prev) << "tick " << k;
    prev = s.G;
    lowest = std::min(lowest, s.G);
  }
  EXPECT_LT(lowest, p.basal_glucose);
}

TEST(PatientStep, MealRaisesGlucose) {
  const PatientParams p = adult();
  PatientState s = equilibrium(p);
  double highest = s.G;
  double prev = s.G;
  for (int k = 0; k < 12; ++k) {
    s = patient_step(p, s, 0.0, k < 6 ? 2.0 : 0.0, Intensity::kNone);
    EXPECT_GT(s.G, prev);
    prev = s.G;
    highest = std::max(highest, s.G);
  }
  EXPECT_GT(highest, p.basal_glucose);
}

TEST(PatientStep, ExerciseDeepensInsulinAction) {
  const PatientParams p = adult();
  const PatientState start = steady_state_at(p, 110.0);
  const double dose = holding_dose(p, 110.0);
  PatientState rest = start;
  PatientState moving = start;
  for (int k = 0; k < 6; ++k) {
    rest = patient_step(p, rest, dose, 0.0, Intensity::kNone);
    moving = patient_step(p, moving, dose, 0.0, Intensity::kIntense);
  }
  EXPECT_LT(moving.G, rest.G);
  EXPECT_GT(moving.E, 1.0);
  for (int k = 0; k < 60; ++k) moving = patient_step(p, moving, dose, 0.0, Intensity::kNone);
  EXPECT_LT(moving.E - 1.0, 0.01);
}

TEST(PatientStep, InsulinMassIsConserved) {
  const PatientParams p = adult();
  PatientState s = equilibrium(p);
  const DailyScenario sc = DailyScenario::nominal();
  for (int k = 0; k < kTicksPerDay; ++k) {
    const double t = k * kTickMinutes;
    s = patient_step(p, s, 0.05 + 0.5 * (k % 37 == 0), sc.meal_rate(t), sc.exercise_at(t));
  }
  const double in_depots = s.isc1 + s.isc2;
  EXPECT_NEAR(s.infused, s.absorbed + in_depots, 1e-3 * s.infused);
}

TEST(PatientStep, DeathGuardAndInputChecks) {
  const PatientParams p = adult();
  PatientState s = equilibrium(p);
  EXPECT_THROW(patient_step(p, s, -1.0, 0.0, Intensity::kNone), PreconditionError);
  bool died = false;
  try {
    for (int k = 0; k < 2000; ++k) s = patient_step(p, s, 100.0, 0.0, Intensity::kNone);
  } catch (const SimulatedDeathError&) {
    died = true;
  }
  EXPECT_TRUE(died);
}

TEST(Cgm, NoiseOffAndSaturation) {
  CounterRng rng(1);
  CgmNoise n;
  PatientState s;
  s.G = 120.0;
  EXPECT_EQ(cgm_read(s, {}, n, rng), 120.0);
  s.G = 500.0;
  EXPECT_EQ(cgm_read(s, {}, n, rng), 400.0);
  s.G = 20.0;
  EXPECT_EQ(cgm_read(s, {}, n, rng), 40.0);
}

TEST(Cgm, WhiteNoiseHasConfiguredStd) {
  CounterRng rng(2);
  CgmNoise n;
  CgmConfig cfg;
  cfg.amplitude = 5.0;
  cfg.phi = 0.0;
  PatientState s;
  s.G = 200.0;
  double sum = 0.0;
  double sq = 0.0;
  const int draws = 50000;
  for (int k = 0; k < draws; ++k) {
    const double e = cgm_read(s, cfg, n, rng) - 200.0;
    sum += e;
    sq += e * e;
  }
  const double mean = sum / draws;
  EXPECT_NEAR(std::sqrt(sq / draws - mean * mean), 5.0, 0.1);
}

TEST(Observation, ColdStartAndRateOfChange) {
  EXPECT_EQ(observation({120.0}).x2, 4.0);
  EXPECT_EQ(observation(std::vector<double>(7, 120.0)).x2, 0.0);
  EXPECT_EQ(observation({120, 125, 130, 135, 140, 145, 150}).x2, 1.0);
  EXPECT_THROW(observation({}), PreconditionError);
  CgmHistory h;
  h.push(120.0);
  EXPECT_EQ(h.observe().x2, 4.0);
  for (double v : {125.0, 130.0, 135.0, 140.0, 145.0, 150.0}) h.push(v);
  EXPECT_EQ(h.observe().x2, 1.0);
  h.push(150.0);
  EXPECT_EQ(h.size(), 7u);
  EXPECT_NEAR(h.observe().x2, 25.0 / 30.0, 1e-15);
}

TEST(Scenario, NominalDay) {
  const DailyScenario s = DailyScenario::nominal();
  ASSERT_EQ(s.meals.size(), 6u);
  const double cho[] = {70, 30, 90, 30, 90, 25};
  const double start[] = {420, 600, 780, 900, 1080, 1380};
  for (int k = 0; k < 6; ++k) {
    EXPECT_EQ(s.meals[k].cho, cho[k]);
    EXPECT_EQ(s.meals[k].start, start[k]);
  }
  ASSERT_EQ(s.exercise.size(), 1u);
  EXPECT_EQ(s.exercise[0].start, 960.0);
  EXPECT_EQ(s.exercise[0].intensity, Intensity::kModerate);
  EXPECT_EQ(s.exercise[0].duration, 30.0);
  // 70 g over 30 min delivered as 6 full ticks.
  EXPECT_NEAR(s.meal_rate(420.0), 70.0 / 30.0, 1e-12);
  EXPECT_EQ(s.meal_rate(400.0), 0.0);
  EXPECT_EQ(s.exercise_at(975.0), Intensity::kModerate);
  EXPECT_EQ(s.exercise_at(990.0), Intensity::kNone);
}

TEST(Scenario, DrawsStayInsideProfileBounds) {
  const DailyScenario nom = DailyScenario::nominal();
  for (const auto& prof : {VariabilityProfile::learning(), VariabilityProfile::evaluation()}) {
    CounterRng rng(prof.meal_shift > 20 ? 5 : 6);
    for (int d = 0; d < 20000; ++d) {
      const DailyScenario s = scenario_generate(nom, prof, rng);
      ASSERT_EQ(s.exercise.size(), 1u);
      const auto& e = s.exercise[0];
      ASSERT_LE(std::abs(e.duration / 30.0 - 1.0), prof.exercise_duration_frac + 1e-12);
      ASSERT_LE(std::abs(e.start - 960.0), prof.exercise_shift + 1e-9);
      for (std::size_t k = 0; k < s.meals.size(); ++k) {
        ASSERT_GE(s.meals[k].cho, 25.0 * (1.0 - prof.cho_frac) - 1e-9);
        ASSERT_LE(s.meals[k].cho, 90.0 * (1.0 + prof.cho_frac) + 1e-9);
        if (k > 0) {
          ASSERT_GE(s.meals[k].start, s.meals[k - 1].start + s.meals[k - 1].duration - 1e-9);
        }
      }
    }
  }
}

TEST(Scenario, LearningChoAtUpperEdge) {
  DailyScenario one;
  one.meals.push_back({420.0, 70.0, 30.0});
  VariabilityProfile p = VariabilityProfile::none();
  p.cho_frac = 0.15;
  CounterRng rng(9);
  double hi = 0.0;
  for (int k = 0; k < 100000; ++k) hi = std::max(hi, scenario_generate(one, p, rng).meals[0].cho);
  EXPECT_LE(hi, 80.5);
  EXPECT_GT(hi, 80.49);
}

TEST(Scenario, OverlapsAreShifted) {
  DailyScenario two;
  two.meals.push_back({600.0, 40.0, 60.0});
  two.meals.push_back({620.0, 20.0, 15.0});
  CounterRng rng(1);
  const DailyScenario s = scenario_generate(two, VariabilityProfile::none(), rng);
  EXPECT_EQ(s.shifted_meals, 1);
  EXPECT_EQ(s.meals[1].start, 660.0);
}

TEST(Scenario, JsonRoundTrip) {
  CounterRng rng(3);
  const DailyScenario s =
      scenario_generate(DailyScenario::nominal(), VariabilityProfile::evaluation(), rng);
  const DailyScenario back = scenario_from_json(scenario_to_json(s));
  ASSERT_EQ(back.meals.size(), s.meals.size());
  for (std::size_t k = 0; k < s.meals.size(); ++k) {
    EXPECT_EQ(back.meals[k].start, s.meals[k].start);
    EXPECT_EQ(back.meals[k].cho, s.meals[k].cho);
  }
  EXPECT_EQ(back.exercise[0].intensity, s.exercise[0].intensity);
  EXPECT_THROW(scenario_from_json("{}"), ConfigError);
}

TEST(Cohort, DeterministicAndTypeConsistent) {
  const auto a = make_cohort(Cohort::kT1Adolescent, 11, 42);
  const auto b = make_cohort(Cohort::kT1Adolescent, 11, 42);
  ASSERT_EQ(a.size(), 11u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].si, b[k].si);
    EXPECT_EQ(a[k].secretion, 0.0);
    EXPECT_GE(a[k].basal_glucose, 90.0);
    EXPECT_LE(a[k].basal_glucose, 160.0);
  }
  EXPECT_NE(make_cohort(Cohort::kT1Adolescent, 1, 43)[0].si, a[0].si);
  for (const auto& p : make_cohort(Cohort::kT2Adult, 5, 1)) EXPECT_GT(p.secretion, 0.0);
  EXPECT_THROW(make_cohort(Cohort::kT1Child, 0, 1), ConfigError);
  EXPECT_EQ(parse_cohort("T1CHIL"), Cohort::kT1Child);
  EXPECT_THROW(parse_cohort("T3"), ConfigError);
  PatientParams bad = adult();
  bad.secretion = 0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(GlucosePlant, CoordinatesAndFrozenReplay) {
  harness::PlantSettings s;
  s.start_minute = 360.0;
  s.window_ticks = 10;
  s.mode = harness::CollectionMode::kFrozenWindow;
  s.profile = VariabilityProfile::learning();
  s.initial_glucose = 150.0;
  s.cold_start = false;
  EXPECT_EQ(harness::GlucosePlant(adult(), s).state()[0], 150.0);
  EXPECT_EQ(harness::GlucosePlant(adult(), s).reference()[0], 120.0);
  s.deviation = true;
  harness::GlucosePlant plant(adult(), s);
  EXPECT_NEAR(plant.state()[0], 30.0, 1e-12);
  EXPECT_EQ(plant.state()[1], 0.0);
  EXPECT_EQ(plant.reference()[0], 0.0);
  std::vector<double> first;
  while (!plant.episode_done()) {
    plant.advance(Vec::Constant(1, 0.2));
    first.push_back(plant.state()[0]);
  }
  plant.reset();
  for (double v : first) {
    plant.advance(Vec::Constant(1, 0.2));
    ASSERT_EQ(plant.state()[0], v);
  }
}

}  // namespace
}  // namespace rlpi::glucosim
