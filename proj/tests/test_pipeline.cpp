#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>

#include "ynet/io/image_io.hpp"
#include "ynet/pipeline/pipeline.hpp"

using namespace ynet;
using namespace ynet::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("run config") {
  const RunConfig def;
  const auto j = def.to_json();
  std::vector<std::string> order;
  for (const auto& [k, v] : j.items()) order.push_back(k);
  CHECK(order == RunConfig::keys());
  CHECK(RunConfig::keys().size() == 19);
  CHECK(j["tau"] == "auto");
  CHECK(RunConfig::from_json(nlohmann::json::parse(j.dump())).to_json().dump() == j.dump());

  auto with = [](const char* text) { return RunConfig::from_json(nlohmann::json::parse(text)); };
  CHECK(with("{}").epochs == 100);
  CHECK(with(R"({"w": 64, "tau": 0.7, "encoder_block": "rcb"})").net.w == 64);
  CHECK(*with(R"({"tau": 0.7})").tau == 0.7);
  CHECK(!with(R"({"tau": "auto"})").tau);
  CHECK_THROWS_AS(with(R"({"width": 64})"), ConfigError);
  CHECK_THROWS_AS(with(R"({"w": "64"})"), ConfigError);
  CHECK_THROWS_AS(with(R"({"epochs": -1})"), ConfigError);
  CHECK_THROWS_AS(with(R"({"tau": 1.0})"), ConfigError);
  CHECK_THROWS_AS(with(R"({"tau": "high"})"), ConfigError);
  CHECK_THROWS_AS(with(R"({"instance_size": 100})"), ConfigError);
  CHECK_THROWS_AS(with(R"({"overlap": 384})"), ConfigError);
  CHECK_THROWS_AS(with(R"({"w": 7})"), ConfigError);
  CHECK_THROWS_AS(with("[1, 2]"), ConfigError);
}

TEST_CASE("eval_masks against direct counting") {
  TempDir pred("ynet_test_pred"), gt("ynet_test_gt");
  Rng rng(4);
  std::size_t inter[4] = {}, uni[4] = {}, correct = 0, total = 0;
  for (const char* id : {"r0", "r1", "r2"}) {
    io::LabelMask p(9, 7), g(9, 7);
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      p.labels[i] = static_cast<std::uint8_t>(rng.below(4));
      g.labels[i] = static_cast<std::uint8_t>(rng.below(4));
      for (std::size_t c = 0; c < 4; ++c) {
        inter[c] += p.labels[i] == c && g.labels[i] == c;
        uni[c] += p.labels[i] == c || g.labels[i] == c;
      }
      correct += p.labels[i] == g.labels[i];
      ++total;
    }
    fs::create_directories(pred.path / id);
    fs::create_directories(gt.path / id);
    io::write_pgm(pred.path / id / "pred.pgm", p);
    io::write_pgm(gt.path / id / "mask.pgm", g);
  }
  double miou = 0;
  for (std::size_t c = 0; c < 4; ++c) miou += double(inter[c]) / double(uni[c]) / 4;
  const auto rep = eval_masks(pred.path, gt.path, 4);
  CHECK(rep.masks == 3);
  CHECK(rep.miou == doctest::Approx(miou).epsilon(1e-12));
  CHECK(rep.accuracy == doctest::Approx(double(correct) / double(total)).epsilon(1e-12));
  CHECK(eval_masks(gt.path, gt.path, 4).miou == 1.0);

  fs::remove(gt.path / "r1" / "mask.pgm");
  CHECK_THROWS_AS(eval_masks(pred.path, gt.path, 4), DataError);
  TempDir empty("ynet_test_empty");
  CHECK_THROWS_AS(eval_masks(empty.path, gt.path, 4), DataError);
}

TEST_CASE("grid csv round trip") {
  TempDir dir("ynet_test_grid");
  std::vector<GridRow> rows{{"a", 0, 0, 0.5, std::nullopt}, {"a", 328, 0, 0.875, true}, {"b", 0, 328, 0.25, false}};
  write_grid_csv(dir.path / "grid.csv", rows);
  const auto back = read_grid_csv(dir.path / "grid.csv");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].roi_id == rows[i].roi_id);
    CHECK(back[i].x == rows[i].x);
    CHECK(back[i].y == rows[i].y);
    CHECK(back[i].confidence == rows[i].confidence);
    CHECK(back[i].discriminative == rows[i].discriminative);
  }
}

TEST_CASE("parallel_for") {
  const auto saved = threads();
  set_threads(3);
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10,
                               [](std::size_t i) {
                                 if (i == 7) throw DataError("boom");
                               }),
                  DataError);
  set_threads(saved);
}
