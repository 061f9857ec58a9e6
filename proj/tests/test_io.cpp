#include <gtest/gtest.h>

#include <filesystem>

#include "sbamdt/io.hpp"
#include "test_support.hpp"

using namespace sbamdt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sbamdt_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

FitConfig tiny_config() {
  FitConfig c;
  c.hyper.m = 3;
  c.hyper.n_knots = 25;
  c.hyper.n_cutoffs = 10;
  c.n_iter = 40;
  c.burn_in = 10;
  c.thin = 3;
  c.seed = 5;
  c.max_threads = 1;
  return c;
}

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double v = draw_normal(rng) * std::pow(10.0, static_cast<int>(uniform01(rng) * 40) - 20);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(std::stod(format_double(0.1)), 0.1);
  EXPECT_EQ(std::stod(format_double(-0.0)), 0.0);
}

TEST(Csv, DatasetRoundTripIsLossless) {
  SyntheticSpec spec;
  spec.n_train = 30;
  spec.n_test = 5;
  spec.n_unstructured = 2;
  const auto [train, test] = assemble(spec);
  std::stringstream buf;
  write_dataset(buf, train.data, &train.f_true);
  const std::string text = buf.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "s_1,s_2,x_1,x_2,y,f_true");
  const auto back = dataset_from_table(read_csv(buf));
  EXPECT_EQ(back.data.s, train.data.s);
  EXPECT_EQ(back.data.x, train.data.x);
  EXPECT_EQ(back.data.y, train.data.y);
  ASSERT_TRUE(back.f_true.has_value());
  EXPECT_EQ(*back.f_true, train.f_true);
}

TEST(Csv, ErrorsNameLineAndColumn) {
  std::istringstream ragged("s_1,x_1,y\n1,2,3\n4,5\n");
  try {
    read_csv(ragged, "data.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("data.csv:3"), std::string::npos) << e.what();
  }
  std::istringstream bad("s_1,y\n1,abc\n");
  EXPECT_THROW(read_csv(bad), ValidationError);
  std::istringstream no_y("s_1,x_1\n1,2\n");
  try {
    dataset_from_table(read_csv(no_y));
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos);
  }
  std::istringstream no_y_ok("s_1,x_1\n1,2\n");
  EXPECT_EQ(dataset_from_table(read_csv(no_y_ok), false).data.size(), 1);
}

TEST(Csv, BlankLinesAndWhitespaceIgnored) {
  std::istringstream in("s_1 , y\n\n 1.5, 2\r\n");
  const auto d = dataset_from_table(read_csv(in));
  EXPECT_EQ(d.data.s(0, 0), 1.5);
  EXPECT_EQ(d.data.y(0), 2.0);
  EXPECT_EQ(d.data.x.cols(), 0);
}

TEST(Config, ParsesKeysCommentsAndSections) {
  std::istringstream in("[fit]\nm = 7  # trees\nvariant=S2\nalpha_levels = 0.5, 1, 2\n; comment\nseed = 99\nbogus = 1\n");
  const auto c = ConfigMap::parse(in);
  const FitConfig f = fit_config_from(c);
  EXPECT_EQ(f.hyper.m, 7);
  EXPECT_EQ(f.variant, Variant::S2);
  EXPECT_EQ(f.hyper.alpha_levels, (std::vector<double>{0.5, 1.0, 2.0}));
  EXPECT_EQ(f.seed, 99u);
  EXPECT_EQ(c.unused(), (std::vector<std::string>{"bogus"}));
}

TEST(Config, RejectsMalformedValues) {
  std::istringstream no_eq("m 7\n");
  EXPECT_THROW(ConfigMap::parse(no_eq), ValidationError);
  std::istringstream bad_int("m = 7.5\n");
  EXPECT_THROW(fit_config_from(ConfigMap::parse(bad_int)), ValidationError);
  std::istringstream bad_variant("variant = S3\n");
  EXPECT_THROW(fit_config_from(ConfigMap::parse(bad_variant)), ValidationError);
  std::istringstream bad_scenario("scenario = circle\n");
  EXPECT_THROW(synthetic_spec_from(ConfigMap::parse(bad_scenario)), ValidationError);
}

TEST(Json, HyperparamsRoundTrip) {
  Hyperparams h;
  h.m = 13;
  h.lambda = 0.123456789012345;
  h.psi = {0.2, 0.3, 0.5};
  const Hyperparams back = hyperparams_from_json(Json::parse(hyperparams_to_json(h).dump()));
  EXPECT_EQ(hyperparams_to_json(back), hyperparams_to_json(h));
}

TEST(Json, TreeRoundTripPreservesPredictions) {
  Rng rng(2);
  const Matrix s = testing_support::random_points(40, 2, rng), x = testing_support::random_points(40, 2, rng);
  const KnotSystem ks = testing_support::all_knots(s, x);
  const CutoffGrid grid = CutoffGrid::build(x, 8);
  const Matrix s_std = ks.standardize(s);
  const Softness soft{{4.0, 8.0, 16.0}};
  for (int rep = 0; rep < 20; ++rep) {
    DecisionTree t = testing_support::random_prior_tree(ks, grid, s_std, x, 4, 3, rng);
    std::vector<double> mu;
    for (int l = 0; l < t.leaf_count(); ++l) mu.push_back(draw_normal(rng));
    t.set_leaf_weights(mu);
    const Json j = tree_to_json(t);
    const DecisionTree back = tree_from_json(Json::parse(j.dump()), ks);
    EXPECT_EQ(tree_to_json(back), j);
    for (int i = 0; i < 40; ++i)
      EXPECT_EQ(tree_predict(s_std.row(i), x.row(i), back, soft, ks), tree_predict(s_std.row(i), x.row(i), t, soft, ks));
  }
}

TEST(Json, MalformedTreeRejected) {
  Rng rng(3);
  const Matrix s = testing_support::random_points(5, 2, rng);
  const KnotSystem ks = testing_support::all_knots(s, s);
  EXPECT_THROW(tree_from_json(Json{{"nodes", Json::array()}}, ks), ValidationError);
  const Json bad_ids{{"nodes", {{{"id", 1}, {"parent", -1}, {"is_leaf", true}, {"mu", 0.0}}}}};
  EXPECT_THROW(tree_from_json(bad_ids, ks), ValidationError);
}

TEST(ModelFiles, SaveLoadGivesIdenticalPredictions) {
  Rng rng(4);
  Dataset d;
  d.s = testing_support::random_points(50, 2, rng);
  d.x = testing_support::random_points(50, 2, rng);
  d.y = d.s.col(0) + 0.1 * d.x.col(1);
  const FittedModel m = fit(d, tiny_config());
  const fs::path dir = scratch("model");
  save_model(m, dir);
  const FittedModel back = load_model(dir);
  EXPECT_EQ(back.snapshots.size(), m.snapshots.size());
  EXPECT_EQ(header_to_json(back), header_to_json(m));
  const auto a = predict(m, d.s, d.x), b = predict(back, d.s, d.x);
  EXPECT_EQ(a.f, b.f);
  EXPECT_EQ(a.y, b.y);
  // a second save is byte-identical
  const fs::path dir2 = scratch("model2");
  save_model(back, dir2);
  EXPECT_EQ(slurp(dir / kSnapshotFile), slurp(dir2 / kSnapshotFile));
  EXPECT_EQ(slurp(dir / kHeaderFile), slurp(dir2 / kHeaderFile));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(ModelFiles, MissingOrCorruptFilesRejected) {
  const fs::path dir = scratch("corrupt");
  EXPECT_THROW(load_model(dir), ValidationError);
  {
    std::ofstream(dir / kHeaderFile) << "{\"format\": \"other\"}";
  }
  EXPECT_THROW(load_model(dir), ValidationError);
  fs::remove_all(dir);
}
