#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>

#include "doctest.h"

#include "cola/data.h"
#include "cola/errors.h"
#include "support/oracles.h"

using cola::Rng;
using cola::Tensor2;

namespace {

std::string u32le(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::string f32le(float f) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &f, 4);
  return u32le(bits);
}

Tensor2 float_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = static_cast<float>(rng.uniform(-3.0, 3.0));
  return t;
}

}  // namespace

TEST_CASE("features: hand-built file with T=5, d=4") {
  std::string bytes = "COLAFT01" + u32le(1) + u32le(5) + u32le(8);
  for (int i = 0; i < 40; ++i) bytes += f32le(0.5f * static_cast<float>(i) - 3.0f);
  const Tensor2 f = cola::parse_features(bytes);
  CHECK(f.rows() == 5);
  CHECK(f.cols() == 8);
  CHECK(f(0, 0) == -3.0);
  CHECK(f(4, 7) == 0.5 * 39 - 3.0);
  CHECK(cola::serialize_features(f) == bytes);
}

TEST_CASE("features: round trip is bit exact") {
  Rng rng(1);
  const Tensor2 f = float_tensor(rng, 17, 6);
  CHECK(cola::parse_features(cola::serialize_features(f)) == f);
  const auto path = std::filesystem::temp_directory_path() / "cola_feat_rt.bin";
  cola::write_features(path, f);
  CHECK(cola::read_features(path) == f);
  std::filesystem::remove(path);
}

TEST_CASE("features: malformed files are rejected with a byte offset") {
  const std::string good = cola::serialize_features(Tensor2(2, 2, 1.0));
  CHECK_THROWS_AS(cola::parse_features("COLAFT01" + u32le(1) + u32le(0) + u32le(4)), cola::FormatError);
  std::string bad_magic = good;
  bad_magic[3] = 'x';
  CHECK_THROWS_AS(cola::parse_features(bad_magic), cola::FormatError);
  std::string bad_version = good;
  bad_version[8] = 2;
  CHECK_THROWS_AS(cola::parse_features(bad_version), cola::FormatError);
  try {
    cola::parse_features(good.substr(0, good.size() - 2));
    FAIL("truncated file accepted");
  } catch (const cola::FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
  CHECK_THROWS_AS(cola::parse_features(good + "zz"), cola::FormatError);
  CHECK_THROWS_AS(cola::read_features("/nonexistent/cola.bin"), cola::FormatError);
}

TEST_CASE("manifest: round trip keeps unknown fields") {
  const std::string text =
      "{\"video_id\":\"a\",\"feature_path\":\"f/a.bin\",\"labels\":[2,0],\"fps\":30.0,\"snippet_frames\":8,\"note\":\"x\"}\n"
      "{\"video_id\":\"b\",\"feature_path\":\"f/b.bin\",\"labels\":[1]}\n";
  const auto records = cola::parse_manifest(text, cola::ManifestMode::kTraining);
  REQUIRE(records.size() == 2);
  CHECK(records[0].labels == std::vector<int>{2, 0});
  CHECK(records[0].fps == 30.0);
  CHECK(records[0].snippet_frames == 8);
  CHECK(records[0].extra["note"] == "x");
  CHECK(records[1].fps == 25.0);
  CHECK(records[1].snippet_frames == 16);
  const auto again = cola::parse_manifest(cola::format_manifest(records), cola::ManifestMode::kTraining);
  CHECK(cola::format_manifest(again) == cola::format_manifest(records));
  CHECK(again[0].extra == records[0].extra);
}

TEST_CASE("manifest: missing fields report the line") {
  const std::string text =
      "{\"video_id\":\"a\",\"feature_path\":\"a.bin\",\"labels\":[0]}\n"
      "{\"video_id\":\"b\",\"feature_path\":\"b.bin\"}\n";
  try {
    cola::parse_manifest(text, cola::ManifestMode::kTraining);
    FAIL("missing labels accepted");
  } catch (const cola::ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK(cola::parse_manifest(text, cola::ManifestMode::kInference).size() == 2);
  CHECK_THROWS_AS(cola::parse_manifest("{\"video_id\":\"a\"}\n", cola::ManifestMode::kInference), cola::ParseError);
  CHECK_THROWS_AS(cola::parse_manifest("not json\n", cola::ManifestMode::kInference), cola::ParseError);
  CHECK_THROWS_AS(cola::parse_manifest("{\"video_id\":\"a\",\"feature_path\":\"a\",\"labels\":[]}\n",
                                       cola::ManifestMode::kTraining),
                  cola::ParseError);
}

TEST_CASE("feature paths resolve against COLA_DATA_DIR, else the manifest directory") {
  cola::VideoRecord rec;
  rec.feature_path = "features/x.bin";
  unsetenv("COLA_DATA_DIR");
  CHECK(cola::resolve_feature_path(rec, "/data/set/train.jsonl") == "/data/set/features/x.bin");
  setenv("COLA_DATA_DIR", "/root/cache", 1);
  CHECK(cola::resolve_feature_path(rec, "/data/set/train.jsonl") == "/root/cache/features/x.bin");
  rec.feature_path = "/abs/y.bin";
  CHECK(cola::resolve_feature_path(rec, "/data/set/train.jsonl") == "/abs/y.bin");
  unsetenv("COLA_DATA_DIR");
}

TEST_CASE("ground truth: round trip and end <= start rejected with line") {
  const std::vector<cola::GroundTruthSegment> segs = {{"a", 1, 0.5, 2.25}, {"b", 0, 3.0, 4.0}};
  const auto back = cola::parse_gt(cola::format_gt(segs));
  REQUIRE(back.size() == 2);
  CHECK(back[0].video_id == "a");
  CHECK(back[0].end_sec == 2.25);
  const std::string bad =
      "{\"video_id\":\"a\",\"class_id\":0,\"start_sec\":1,\"end_sec\":2}\n"
      "\n"
      "{\"video_id\":\"a\",\"class_id\":0,\"start_sec\":3,\"end_sec\":3}\n";
  try {
    cola::parse_gt(bad);
    FAIL("empty segment accepted");
  } catch (const cola::ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("synthetic: noise-free snippets equal their prototype away from boundaries") {
  cola::SynthConfig config;
  config.noise_sigma = 0.0;
  config.transition_width = 1;
  config.num_train = 10;
  config.num_test = 2;
  const auto data = cola::generate_synthetic(config);
  const double sps = 16.0 / 25.0;
  for (std::size_t v = 0; v < data.train.records.size(); ++v) {
    const Tensor2& f = data.train.features[v];
    const int cls = data.train.records[v].labels[0];
    std::vector<std::pair<long, long>> segs;
    for (const auto& g : data.train.gt)
      if (g.video_id == data.train.records[v].video_id)
        segs.emplace_back(std::lround(g.start_sec / sps), std::lround(g.end_sec / sps));
    for (long t = 0; t < static_cast<long>(f.rows()); ++t) {
      bool inside = false, near = false;
      for (auto [s, e] : segs) {
        inside = inside || (t >= s && t < e);
        near = near || t == s - 1 || t == s || t == e - 1 || t == e;
      }
      if (near) continue;
      for (std::size_t j = 0; j < f.cols(); ++j) {
        const double expected = inside ? data.class_prototypes(static_cast<std::size_t>(cls), j)
                                       : data.background_prototype[j];
        CHECK(f(static_cast<std::size_t>(t), j) == static_cast<double>(static_cast<float>(expected)));
      }
    }
  }
}

TEST_CASE("synthetic: fixed seed is bit identical, labels and ground truth consistent") {
  cola::SynthConfig config;
  config.num_train = 12;
  config.num_test = 4;
  const auto a = cola::generate_synthetic(config);
  const auto b = cola::generate_synthetic(config);
  REQUIRE(a.train.features.size() == b.train.features.size());
  for (std::size_t i = 0; i < a.train.features.size(); ++i) CHECK(a.train.features[i] == b.train.features[i]);
  CHECK(cola::format_gt(a.test.gt) == cola::format_gt(b.test.gt));
  for (const auto& g : a.train.gt) {
    CHECK(g.end_sec > g.start_sec);
    bool found = false;
    for (std::size_t i = 0; i < a.train.records.size(); ++i) {
      if (a.train.records[i].video_id != g.video_id) continue;
      found = true;
      CHECK(a.train.records[i].labels == std::vector<int>{g.class_id});
      CHECK(g.end_sec <= a.train.features[i].rows() * a.train.records[i].snippet_seconds() + 1e-9);
    }
    CHECK(found);
  }
  cola::SynthConfig other = config;
  other.seed = 43;
  CHECK(cola::generate_synthetic(other).train.features[0] != a.train.features[0]);
}

TEST_CASE("synthetic: prototypes are close to orthogonal for wide features") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cola::SynthConfig config;
    config.feature_dim = 64;
    config.num_classes = 10;
    config.num_train = 1;
    config.num_test = 1;
    config.seed = seed;
    const auto data = cola::generate_synthetic(config);
    const Tensor2& p = data.class_prototypes;
    for (std::size_t a = 0; a < p.rows(); ++a) {
      double norm = 0.0;
      for (double v : p.row(a)) norm += v * v;
      CHECK(std::abs(norm - 1.0) < 1e-12);
      for (std::size_t b = a + 1; b < p.rows(); ++b) {
        double dot = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) dot += p(a, j) * p(b, j);
        CHECK(dot < 0.5);
      }
    }
  }
}

TEST_CASE("synthetic: a linear probe separates clean snippets perfectly") {
  cola::SynthConfig config;
  config.noise_sigma = 0.0;
  config.transition_width = 1;
  config.num_train = 20;
  config.num_test = 1;
  const auto data = cola::generate_synthetic(config);
  // Probe weights: the prototypes themselves plus the background prototype.
  Tensor2 w(config.num_classes + 1, data.class_prototypes.cols());
  for (std::size_t c = 0; c < config.num_classes; ++c)
    for (std::size_t j = 0; j < w.cols(); ++j) w(c, j) = data.class_prototypes(c, j);
  for (std::size_t j = 0; j < w.cols(); ++j) w(config.num_classes, j) = data.background_prototype[j];
  std::size_t checked = 0;
  for (std::size_t v = 0; v < data.train.records.size(); ++v) {
    const Tensor2& f = data.train.features[v];
    for (std::size_t t = 0; t < f.rows(); ++t) {
      // Clean snippets are exactly one of the prototypes; the probe must pick it.
      std::size_t truth = w.rows();
      for (std::size_t c = 0; c < w.rows(); ++c) {
        bool equal = true;
        for (std::size_t j = 0; j < w.cols(); ++j) equal = equal && f(t, j) == static_cast<double>(static_cast<float>(w(c, j)));
        if (equal) truth = c;
      }
      if (truth == w.rows()) continue;
      std::size_t best = 0;
      double best_score = -1e300;
      for (std::size_t c = 0; c < w.rows(); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < w.cols(); ++j) s += w(c, j) * f(t, j);
        if (s > best_score) {
          best_score = s;
          best = c;
        }
      }
      CHECK(best == truth);
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("synthetic: segments that cannot fit are a configuration error") {
  cola::SynthConfig config;
  config.min_length = 10;
  config.max_length = 10;
  config.min_segment_length = 20;
  config.max_segment_length = 20;
  CHECK_THROWS_AS(cola::generate_synthetic(config), cola::ConfigError);
}

TEST_CASE("write_synthetic layout") {
  cola::SynthConfig config;
  config.num_train = 3;
  config.num_test = 2;
  const auto dir = std::filesystem::temp_directory_path() / "cola_synth_layout";
  std::filesystem::remove_all(dir);
  cola::write_synthetic(cola::generate_synthetic(config), dir);
  for (const char* f : {"train.jsonl", "test.jsonl", "gt_train.jsonl", "gt_test.jsonl", "classes.txt"})
    CHECK(std::filesystem::exists(dir / f));
  const auto records = cola::read_manifest(dir / "train.jsonl", cola::ManifestMode::kTraining);
  REQUIRE(records.size() == 3);
  CHECK(cola::read_features(cola::resolve_feature_path(records[0], dir / "train.jsonl")).cols() == 32);
  CHECK(cola::read_class_names(dir / "classes.txt", 5).size() == 5);
  std::filesystem::remove_all(dir);
}
