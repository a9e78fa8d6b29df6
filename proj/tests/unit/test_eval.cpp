#include <cmath>
#include <sstream>

#include "cwt/data_io.hpp"
#include "cwt/eval.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cwt;
using test::random_tensor;

namespace {

// Two-pixel classifier: logit c = pixel c, so class 1 wins iff pixel 1 > pixel 0.
Model pixel_model() {
  const auto spec = ModelSpec::parse("input 1 1 2; flatten; dense 2");
  std::vector<LayerParams<float>> params(2);
  params[1] = {Tensor({2, 2}, {1, 0, 0, 1}), Tensor({2})};
  return Model(spec, params);
}

Dataset stripes(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.images = Tensor({n, 1, 8, 8});
  d.num_classes = 2;
  d.split = "stripes";
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    d.labels.push_back(label);
    for (std::size_t p = 0; p < 64; ++p) {
      const bool lit = (p < 32) == (label == 0);
      d.images[i * 64 + p] = static_cast<float>((lit ? 0.6 : 0.2) + rng.uniform(0.0, 0.2));
    }
  }
  return d;
}

struct Zoo {
  Model a, b, c;
};

const Zoo& zoo() {
  static const Zoo z = [] {
    const Dataset train_set = stripes(200, 1);
    TrainOptions o;
    o.epochs = 4;
    o.batch_size = 8;
    auto fit = [&](const char* spec, std::uint64_t seed) {
      o.seed = seed;
      return cwt::train(ModelSpec::parse(spec), train_set, o).model;
    };
    return Zoo{fit("input 1 8 8; conv 4 3 1 1; relu; maxpool; flatten; dense 2", 1),
               fit("input 1 8 8; conv 2 3 2 1; relu; flatten; dense 2", 2),
               fit("input 1 8 8; conv 3 3 2 1; relu; maxpool; flatten; dense 2", 3)};
  }();
  return z;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("attack success rate examples") {
  const Model m = pixel_model();
  const Tensor adv({4, 1, 1, 2}, {0.9f, 0.1f, 0.1f, 0.9f, 0.2f, 0.8f, 0.7f, 0.3f});  // predicts 0,1,1,0
  const std::vector<int> all_right{0, 1, 1, 0}, half{0, 0, 1, 1}, none{1, 0, 0, 1};
  CHECK(attack_success_rate(m, adv, std::span<const int>(all_right)) == 0.0);
  CHECK(attack_success_rate(m, adv, std::span<const int>(half)) == 50.0);
  CHECK(attack_success_rate(m, adv, std::span<const int>(none)) == 100.0);
  const std::vector<int> empty;
  CHECK_THROWS(attack_success_rate(m, adv, std::span<const int>(empty)));
  const std::vector<int> three{0, 1, 1};
  CHECK_THROWS(attack_success_rate(m, adv, std::span<const int>(three)));
}

TEST_CASE("aggregate: mean, population and sample deviation") {
  const std::vector<double> v{1, 3};
  const auto a = aggregate(v);
  CHECK(a.mean == 2.0);
  CHECK(a.std_dev == 1.0);
  CHECK(a.sample_std_dev == doctest::Approx(std::sqrt(2.0)));

  const std::vector<double> one{42};
  const auto b = aggregate(one);
  CHECK(b.mean == 42.0);
  CHECK(b.std_dev == 0.0);
  CHECK(std::isnan(b.sample_std_dev));

  const std::vector<double> row{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(aggregate(row).std_dev == 2.0);
  CHECK(aggregate(row).mean == 5.0);
  CHECK_THROWS(aggregate(std::span<const double>{}));
}

TEST_CASE("evaluate_transfer: columns, filtering, recomputed rates") {
  const Zoo& z = zoo();
  const Dataset data = stripes(60, 2);
  const NamedModel sur{"a", &z.a};
  const std::vector<NamedModel> targets{{"b", &z.b}, {"c", &z.c}};
  const auto mifgsm = make_plugin("identity");
  const auto cwt = make_plugin("cwt");
  const std::vector<AttackEntry> attacks{{"mifgsm", mifgsm.get()}, {"cwt", cwt.get()}};
  AttackConfig cfg;
  cfg.eps = 0.3;
  cfg.num_copies = 3;
  EvalOptions opts;
  opts.max_images = 25;
  const auto reports = evaluate_transfer(sur, targets, data, cfg, attacks, opts);
  REQUIRE(reports.size() == 2);

  const std::vector<const Model*> all{&z.a, &z.b, &z.c};
  const Dataset kept = filter_correct(data, all).head(25);
  for (std::size_t r = 0; r < 2; ++r) {
    const AsrReport& rep = reports[r];
    CHECK(rep.attack == attacks[r].name);
    CHECK(rep.surrogate == "a");
    CHECK(rep.targets == std::vector<std::string>{"a", "b", "c"});
    CHECK(rep.is_surrogate == std::vector<bool>{true, false, false});
    CHECK(rep.samples == kept.size());
    CHECK(rep.config.at("eps") == "0.3");
    CHECK(rep.config.at("copies") == "3");
    CHECK(rep.config.at("plugin") == attacks[r].plugin->name());

    const Tensor adv = attack_batch(z.a, kept.images, kept.labels, cfg, *attacks[r].plugin);
    for (std::size_t t = 0; t < 3; ++t) {
      CHECK(rep.asr[t] == attack_success_rate(*all[t], adv, kept.labels));
    }
    const auto agg = aggregate(rep.asr);
    CHECK(rep.mean == agg.mean);
    CHECK(rep.std_dev == agg.std_dev);
    CHECK(rep.black_box_mean() == doctest::Approx((rep.asr[1] + rep.asr[2]) / 2));
  }
}

TEST_CASE("evaluate_transfer keeps a listed surrogate in place and tolerates zero iterations") {
  const Zoo& z = zoo();
  const Dataset data = stripes(30, 3);
  const std::vector<NamedModel> targets{{"b", &z.b}, {"a", &z.a}};
  const auto id = make_plugin("identity");
  const std::vector<AttackEntry> attacks{{"none", id.get()}};
  AttackConfig cfg;
  cfg.iters = 0;
  const auto r = evaluate_transfer({"a", &z.a}, targets, data, cfg, attacks);
  CHECK(r[0].targets == std::vector<std::string>{"b", "a"});
  CHECK(r[0].is_surrogate == std::vector<bool>{false, true});
  CHECK(r[0].asr == std::vector<double>{0.0, 0.0});
  CHECK(r[0].mean == 0.0);
}

TEST_CASE("evaluate_transfer errors") {
  const Zoo& z = zoo();
  const auto id = make_plugin("identity");
  const std::vector<AttackEntry> attacks{{"x", id.get()}};
  const std::vector<NamedModel> none;
  CHECK_THROWS(evaluate_transfer({"a", nullptr}, none, stripes(5, 4), {}, attacks));
  const std::vector<AttackEntry> missing{{"x", nullptr}};
  CHECK_THROWS(evaluate_transfer({"a", &z.a}, none, stripes(5, 4), {}, missing));
  Dataset wrong = stripes(5, 4);
  for (int& l : wrong.labels) l = 1 - l;
  CHECK_THROWS_AS(evaluate_transfer({"a", &z.a}, none, wrong, {}, attacks), std::runtime_error);
}

TEST_CASE("sweep values") {
  CHECK(parse_sweep_param("rot-k") == SweepParam::RotatedBlocks);
  for (auto p : {SweepParam::Blocks, SweepParam::ScaleMax, SweepParam::MaxAngle, SweepParam::RotatedBlocks,
                 SweepParam::Copies, SweepParam::PreInterpolation}) {
    CHECK(parse_sweep_param(to_string(p)) == p);
  }
  CHECK_THROWS(parse_sweep_param("alpha"));

  const CwtParams base;
  CHECK(with_sweep_value(base, SweepParam::Blocks, 3).blocks == 3);
  CHECK(with_sweep_value(base, SweepParam::Blocks, 1).rotated_blocks == 1);
  CHECK(with_sweep_value(base, SweepParam::ScaleMax, 1.5).scale_max == 1.5);
  CHECK(with_sweep_value(base, SweepParam::MaxAngle, 10).max_angle_deg == 10);
  CHECK(with_sweep_value(base, SweepParam::RotatedBlocks, 0).rotated_blocks == 0);
  CHECK(with_sweep_value(base, SweepParam::Copies, 7).num_copies == 7);
  CHECK_FALSE(with_sweep_value(base, SweepParam::PreInterpolation, 0).pre_interpolation);
  CHECK_THROWS(with_sweep_value(base, SweepParam::Blocks, 0));
  CHECK_THROWS(with_sweep_value(base, SweepParam::Blocks, 2.5));
  CHECK_THROWS(with_sweep_value(base, SweepParam::Copies, 0));
  CHECK_THROWS(with_sweep_value(base, SweepParam::PreInterpolation, 0.5));
  CHECK_THROWS(with_sweep_value(base, SweepParam::RotatedBlocks, 5));
  try {
    (void)with_sweep_value(base, SweepParam::ScaleMax, 0.5);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).starts_with("sweep smax=0.5: "));
  }
}

TEST_CASE("sweep runs one report per value") {
  const Zoo& z = zoo();
  const std::vector<NamedModel> targets{{"b", &z.b}};
  const std::vector<double> values{1, 2};
  AttackConfig cfg;
  cfg.iters = 2;
  cfg.eps = 0.2;
  EvalOptions opts;
  opts.max_images = 8;
  const auto r = sweep(SweepParam::Copies, values, CwtParams{}, {"a", &z.a}, targets, stripes(30, 5), cfg, opts);
  REQUIRE(r.size() == 2);
  CHECK(r[0].attack == "cwt[copies=1]");
  CHECK(r[1].attack == "cwt[copies=2]");
  CHECK(r[1].config.at("copies") == "2");
  CHECK(r[1].targets == std::vector<std::string>{"a", "b"});
  CHECK_THROWS(sweep(SweepParam::Copies, std::span<const double>{}, CwtParams{}, {"a", &z.a}, targets,
                     stripes(30, 5), cfg, opts));
}

TEST_CASE("csv and table output") {
  AsrReport r;
  r.attack = "cwt";
  r.surrogate = "s";
  r.targets = {"s", "t"};
  r.asr = {100.0, 37.5};
  r.is_surrogate = {true, false};
  r.mean = 68.75;
  r.std_dev = 31.25;
  r.samples = 8;
  const std::vector<AsrReport> reports{r};

  std::ostringstream csv;
  write_csv(csv, reports);
  CHECK(lines_of(csv.str()) == std::vector<std::string>{"attack,surrogate,target,asr,is_surrogate",
                                                        "cwt,s,s,100,1", "cwt,s,t,37.5,0", "cwt,s,MEAN,68.75,",
                                                        "cwt,s,STD,31.25,"});

  std::ostringstream table;
  print_table(table, reports);
  const auto lines = lines_of(table.str());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].find("attack") == 0);
  CHECK(lines[1].find("100.0*") != std::string::npos);
  CHECK(lines[1].find("37.5 ") != std::string::npos);
  CHECK(lines[1].find("68.8") != std::string::npos);
  CHECK(lines[2] == "(8 images; * = surrogate)");
}
