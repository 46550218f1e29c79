#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "mmu/config.hpp"
#include "mmu/data_gen.hpp"
#include "mmu/io.hpp"
#include "mmu/saddle_solver.hpp"

namespace mmu {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void expect_same(const Dataset& a, const Dataset& b) {
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.family, b.family);
  EXPECT_EQ(a.d1, b.d1);
  EXPECT_EQ(a.d2, b.d2);
  EXPECT_EQ(a.generator_seed, b.generator_seed);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].u, b[i].u);
    EXPECT_EQ(a[i].y, b[i].y);
    ASSERT_EQ(a[i].quad.has_value(), b[i].quad.has_value());
    if (a[i].quad) {
      EXPECT_EQ(a[i].quad->A, b[i].quad->A);
      EXPECT_EQ(a[i].quad->B, b[i].quad->B);
      EXPECT_EQ(a[i].quad->C, b[i].quad->C);
      EXPECT_EQ(a[i].quad->a, b[i].quad->a);
      EXPECT_EQ(a[i].quad->c, b[i].quad->c);
    }
  }
}

TEST(Doubles, ShortestRoundTrip) {
  for (double x : {0.0, -0.0, 1.0 / 3, 1e-300, 6.02214076e23, std::numeric_limits<double>::denorm_min(),
                   std::numeric_limits<double>::max()}) {
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_THROW(parse_double("1.5x"), IoError);
  EXPECT_THROW(parse_double(""), IoError);
}

TEST(DatasetCsv, QuadraticRoundTripIsBitExact) {
  const Dataset d = QuadGenerator({.d1 = 3, .d2 = 2, .seed = 9}).draw(25);
  const std::string text = dataset_to_csv(d);
  expect_same(d, dataset_from_csv(text));
  EXPECT_EQ(dataset_to_csv(dataset_from_csv(text)), text);
}

TEST(DatasetCsv, BilogRoundTripIsBitExact) {
  const Dataset d = BilogGenerator({.d1 = 4, .d2 = 3, .seed = 9}).draw(40);
  expect_same(d, dataset_from_csv(dataset_to_csv(d)));
}

TEST(DatasetCsv, RowCountAndHeader) {
  const std::string text = dataset_to_csv(BilogGenerator({.d1 = 2, .d2 = 1, .seed = 4}).draw(17));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 17 + 2);
  EXPECT_EQ(text.rfind("# mmu-dataset v1 family=bilinear_logistic d1=2 d2=1 seed=4\nx_0,x_1,u_0,y\n", 0), 0u);
}

// Recorded at first generation; guards the generator, RNG and CSV format.
TEST(DatasetCsv, RecordedChecksum) {
  EXPECT_EQ(fnv1a(dataset_to_csv(QuadGenerator({.d1 = 2, .d2 = 2, .seed = 2024}).draw(50))), 0x5994702fc6c375e7ULL);
  EXPECT_EQ(fnv1a(dataset_to_csv(BilogGenerator({.d1 = 2, .d2 = 2, .seed = 2024}).draw(50))), 0xd4c34b1f8af3bff0ULL);
}

TEST(DatasetCsv, RejectsMalformedInput) {
  const std::string good = dataset_to_csv(BilogGenerator({.d1 = 1, .d2 = 1, .seed = 1}).draw(2));
  EXPECT_THROW(dataset_from_csv("garbage\n"), IoError);
  EXPECT_THROW(dataset_from_csv(good + "1,2\n"), IoError);
  std::string bad_col = good;
  bad_col.replace(bad_col.find("x_0"), 3, "q_0");
  EXPECT_THROW(dataset_from_csv(bad_col), IoError);
  std::string bad_num = good;
  bad_num.replace(bad_num.rfind('\n', bad_num.size() - 2) + 1, 1, "z");
  EXPECT_THROW(dataset_from_csv(bad_num), IoError);
}

TEST(ModelText, RoundTripIsBitExact) {
  const auto inst = make_quad_instance({.d1 = 3, .d2 = 2, .seed = 5}, 30, 0);
  const TrainedModel m = train(inst.loss, inst.train, inst.domain, SolverConfig{});
  const TrainedModel r = model_from_text(model_to_text(m));
  EXPECT_EQ(r.point.w, m.point.w);
  EXPECT_EQ(r.point.v, m.point.v);
  EXPECT_EQ(r.memory.d_ww, m.memory.d_ww);
  EXPECT_EQ(r.memory.d_vv, m.memory.d_vv);
  EXPECT_EQ(r.memory.anchor.w, m.point.w);
  EXPECT_EQ(r.n, 30u);
  EXPECT_EQ(r.memory.n, 30u);
  EXPECT_EQ(r.residual_grad_norm, m.residual_grad_norm);
  EXPECT_THROW(model_from_text("mmu-model v2\n"), IoError);
}

TEST(Files, WriteAndReadBack) {
  const auto dir = std::filesystem::temp_directory_path() / "mmu_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "d.csv").string();
  const Dataset d = QuadGenerator({.d1 = 1, .d2 = 1, .seed = 3}).draw(5);
  write_dataset_csv(path, d);
  expect_same(d, read_dataset_csv(path));
  EXPECT_THROW(read_file((dir / "missing.csv").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Report, SchemaAndFiniteness) {
  ReportRow r;
  r.run_id = "x-s1-0";
  r.mode = "alg3";
  r.n = 10;
  r.m = 2;
  r.bound = 0.25;
  const std::string text = report_to_csv({r}, {0xabcULL, true, 1e-10});
  EXPECT_EQ(text.rfind("# schema=mmu-report-v1 config_hash=0000000000000abc certificate=estimated", 0), 0u);
  EXPECT_NE(text.find("solver_tolerance=1e-10"), std::string::npos);
  EXPECT_NE(text.find("\nrun_id,mode,n,m,epsilon,delta,sigma_w,sigma_v,bound,measured_dw,measured_dv,"
                      "eps_effective,weak_pd,strong_pd,wall_time_ms\n"),
            std::string::npos);
  EXPECT_NE(text.find("\nx-s1-0,alg3,10,2,0,0,0,0,0.25,0,0,0,0,0,0\n"), std::string::npos);
  EXPECT_NE(report_to_csv({}, {1, false, 0}).find("certificate=supplied"), std::string::npos);
  r.weak_pd = std::nan("");
  EXPECT_THROW(report_to_csv({r}, {}), IoError);
}

TEST(ConfigText, ParseAndAccess) {
  const Config c = Config::parse("# comment\nn = 40\nname = quad # trailing\nflag = yes\nlist = 1, 3:7:2, 10\n");
  EXPECT_EQ(c.integer("n", 0), 40);
  EXPECT_EQ(c.str("name", ""), "quad");
  EXPECT_TRUE(c.boolean("flag", false));
  EXPECT_EQ(c.index_list("list"), (std::vector<std::size_t>{1, 3, 5, 7, 10}));
  EXPECT_EQ(c.real("missing", 2.5), 2.5);
  EXPECT_TRUE(c.unused_keys().empty());
  EXPECT_THROW(Config::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
  EXPECT_THROW(Config::parse("n = x").integer("n", 0), ConfigError);
  EXPECT_THROW(Config::parse("l = 5:2").index_list("l"), ConfigError);
}

TEST(ConfigText, HashIgnoresOrderAndComments) {
  EXPECT_EQ(Config::parse("a=1\nb=2").hash(), Config::parse("# c\nb = 2\na = 1\n").hash());
  EXPECT_NE(Config::parse("a=1\nb=2").hash(), Config::parse("a=1\nb=3").hash());
}

}  // namespace
}  // namespace mmu
