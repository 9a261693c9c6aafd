#include <doctest.h>

#include <cmath>
#include <functional>

#include "acp/error.hpp"
#include "acp/fitness.hpp"
#include "acp/random.hpp"

using namespace acp;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

}  // namespace

TEST_SUITE("fitness") {
  TEST_CASE("surrogate landscape values") {
    const ArchTemplate t = build_template("toynet-3w16");
    const StructureVector target{"toynet-3w16", {5, 9, 12}};
    CHECK(surrogate_fitness(target, target, 4.0, 0.0, t) == 1.0);
    // |s - target| = 4 = sharpness
    CHECK(std::fabs(surrogate_fitness({"toynet-3w16", {5, 9, 16}}, target, 4.0, 0.0, t) - std::exp(-1.0)) < 1e-15);
    CHECK(std::fabs(surrogate_fitness({"toynet-3w16", {5, 9, 16}}, target, 4.0, 0.0, t) - 0.36787944117144233) < 1e-15);

    const double params = static_cast<double>(count_params(apply_structure(t, target)));
    const double base = static_cast<double>(count_params(apply_structure(t, baseline_structure(t))));
    CHECK(std::fabs(surrogate_fitness(target, target, 4.0, 0.3, t) - (1.0 - 0.3 * params / base)) < 1e-15);
  }

  TEST_CASE("surrogate falls off monotonically along each axis") {
    const ArchTemplate t = build_template("toynet-3w16");
    const StructureVector target{"toynet-3w16", {5, 9, 12}};
    for (std::size_t g = 0; g < 3; ++g) {
      double previous = 2.0;
      for (int c = target.channels[g]; c <= 16; ++c) {
        StructureVector s = target;
        s.channels[g] = c;
        const double f = surrogate_fitness(s, target, 3.0, 0.0, t);
        CHECK(f < previous);
        previous = f;
      }
    }
  }

  TEST_CASE("surrogate maximum is unique and sits on the target") {
    const ArchTemplate t = build_template("toynet-3w10");
    const StructureVector target{"toynet-3w10", {2, 7, 10}};
    SurrogateEvaluator eval(t, target, 2.5, 0.0);
    int maxima = 0;
    for (int a = 1; a <= 10; ++a) {
      for (int b = 1; b <= 10; ++b) {
        for (int c = 1; c <= 10; ++c) {
          const StructureVector s{"toynet-3w10", {a, b, c}};
          const double f = eval.evaluate(s, 0);
          CHECK(f > 0.0);
          CHECK(f <= 1.0);
          if (f == 1.0) {
            ++maxima;
            CHECK(s == target);
          }
          CHECK(f == eval.evaluate(s, 12345));
        }
      }
    }
    CHECK(maxima == 1);
  }

  TEST_CASE("surrogate construction errors") {
    const ArchTemplate t = build_template("toynet-2");
    const StructureVector target{"toynet-2", {4, 4}};
    CHECK(kind_of([&] { SurrogateEvaluator(t, target, 0.0, 0.0); }) == ErrorKind::Config);
    CHECK(kind_of([&] { SurrogateEvaluator(t, target, 1.0, 1.0); }) == ErrorKind::Config);
    CHECK(kind_of([&] { SurrogateEvaluator(t, {"toynet-2", {4}}, 1.0, 0.0); }) == ErrorKind::StructureMismatch);
    CHECK(kind_of([&] { SurrogateEvaluator(t, {"toynet-2", {4, 99}}, 1.0, 0.0); }) == ErrorKind::ChannelOutOfRange);
  }

  TEST_CASE("one-shot evaluate through a spec") {
    const ArchTemplate t = build_template("toynet-2");
    EvaluatorSpec spec;
    spec.surrogate.target = {6, 6};
    spec.surrogate.sharpness = 2.0;
    CHECK(evaluate({"toynet-2", {6, 6}}, spec, t, 0) == 1.0);
    CHECK(kind_of([&] { evaluate({"toynet-2", {6, 60}}, spec, t, 0); }) == ErrorKind::ChannelOutOfRange);
  }

  TEST_CASE("evaluator spec validation") {
    const ArchTemplate t = build_template("toynet-2");
    EvaluatorSpec spec;
    CHECK(kind_of([&] { make_evaluator(spec, t); }) == ErrorKind::Config);  // no target
    spec.kind = EvaluatorKind::External;
    CHECK(kind_of([&] { validate_evaluator_spec(spec); }) == ErrorKind::Config);  // no command
    spec.external.command = "true";
    spec.external.timeout_seconds = 0.0;
    CHECK(kind_of([&] { validate_evaluator_spec(spec); }) == ErrorKind::Config);
    spec.kind = EvaluatorKind::ToyNet;
    spec.toynet.epochs = 0;
    CHECK(kind_of([&] { validate_evaluator_spec(spec); }) == ErrorKind::Config);
    spec.toynet.epochs = 1;
    CHECK(kind_of([&] { make_evaluator(spec, build_template("vgg16-cifar")); }) == ErrorKind::UnknownArchitecture);
  }

  TEST_CASE("retrain budget") {
    CHECK(retrain_budget(1000, 1000, 7) == 7);
    CHECK(retrain_budget(2000, 1000, 100) == 200);
    CHECK(retrain_budget(314'590'000, 152'640'000, 160) == 330);
    CHECK(retrain_budget(3, 2, 1) == 2);
    CHECK(kind_of([] { retrain_budget(10, 0, 1); }) == ErrorKind::DegenerateStructure);
    CHECK(kind_of([] { retrain_budget(10, 5, 0); }) == ErrorKind::Config);
    CHECK(kind_of([] { retrain_budget(std::int64_t{1} << 62, 1, 100); }) == ErrorKind::Config);

    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
      const std::int64_t b = 1 + static_cast<std::int64_t>(rng.below(1'000'000'000));
      const std::int64_t p = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(b)));
      const int e = 1 + static_cast<int>(rng.below(200));
      const int got = retrain_budget(b, p, e);
      CHECK(got >= e);
      // ceil: got - 1 epochs fall short, got epochs suffice
      CHECK(static_cast<long double>(got) * p >= static_cast<long double>(e) * b);
      CHECK(static_cast<long double>(got - 1) * p < static_cast<long double>(e) * b);
    }
  }
}
