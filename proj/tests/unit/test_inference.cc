#include <algorithm>
#include <cmath>

#include "doctest.h"

#include "cola/inference.h"
#include "support/oracles.h"

using cola::Proposal;
using cola::Rng;
using cola::SnippetInterval;
using cola::Tensor2;

namespace {

Proposal make(double s, double e, double score, int cls = 0, const char* vid = "v") {
  Proposal p;
  p.video_id = vid;
  p.class_id = cls;
  p.start_sec = s;
  p.end_sec = e;
  p.start_snippet = static_cast<std::size_t>(s);
  p.end_snippet = static_cast<std::size_t>(e);
  p.score = score;
  return p;
}

bool same_set(std::vector<Proposal> a, std::vector<Proposal> b) {
  cola::sort_canonical(a);
  cola::sort_canonical(b);
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].video_id != b[i].video_id || a[i].class_id != b[i].class_id ||
        a[i].start_sec != b[i].start_sec || a[i].end_sec != b[i].end_sec || a[i].score != b[i].score)
      return false;
  }
  return true;
}

cola::ModelParams block_model() {
  cola::ModelConfig config;
  config.feature_dim = 1;
  config.num_classes = 2;
  Rng rng(1);
  cola::ModelParams params = cola::ModelParams::initialize(config, rng);
  params.embed_weight.value.fill(0.0);
  params.embed_weight.value(0, 0 * 3 + 1) = 1.0;  // centre tap, identity
  params.embed_weight.value(1, 1 * 3 + 1) = 1.0;
  params.cls_weight.value = Tensor2::from_rows({{1.0, 0.0}, {0.0, 0.0}});
  params.cls_bias.value = Tensor2::from_rows({{0.0, -2.0}});
  return params;
}

}  // namespace

TEST_CASE("class selection") {
  CHECK(cola::select_video_classes(std::vector<double>{0.7, 0.2, 0.1}, 0.2) == std::vector<int>{0});
  CHECK(cola::select_video_classes(std::vector<double>(10, 0.1), 0.2) == std::vector<int>{0});
  CHECK(cola::select_video_classes(std::vector<double>{0.25, 0.25, 0.5}, 0.2) == std::vector<int>{0, 1, 2});
}

TEST_CASE("min-max normalization") {
  CHECK(cola::minmax_normalize(std::vector<double>{2, 4, 3}) == std::vector<double>{0, 1, 0.5});
  CHECK(cola::minmax_normalize(std::vector<double>{3, 3}) == std::vector<double>{0, 0});
}

TEST_CASE("segment_tcas examples and run-length oracle") {
  CHECK(cola::segment_tcas(std::vector<double>{0, 1, 1, 0, 1}, 0.5) ==
        std::vector<SnippetInterval>{{1, 3}, {4, 5}});
  CHECK(cola::segment_tcas(std::vector<double>{0.1, 0.2}, 0.5).empty());
  Rng rng(2);
  for (std::size_t trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng.below(30));
    for (double& x : v) x = rng.uniform();
    const double thr = rng.uniform();
    std::vector<SnippetInterval> expected;
    for (std::size_t t = 0; t < v.size(); ++t) {
      if (v[t] < thr) continue;
      if (!expected.empty() && expected.back().end == t) {
        expected.back().end = t + 1;
      } else {
        expected.push_back({t, t + 1});
      }
    }
    CHECK(cola::segment_tcas(v, thr) == expected);
  }
}

TEST_CASE("outer-inner contrast score") {
  const std::vector<double> cas = {0.1, 0.9, 0.9, 0.1};
  CHECK(cola::score_proposal(cas, {1, 3}, 0.25) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(cola::score_proposal(std::vector<double>{0, 1, 1, 0}, {1, 3}, 0.25) == 1.0);
  CHECK(cola::score_proposal(std::vector<double>(6, 0.4), {2, 4}, 0.25) == doctest::Approx(0.0));
  CHECK(cola::score_proposal(std::vector<double>{0.6, 0.8}, {0, 2}, 0.25) == doctest::Approx(0.7));
}

TEST_CASE("nms: worked examples") {
  const auto kept = cola::nms({make(0, 10, 0.9), make(1, 11, 0.8)}, 0.6);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);
  CHECK(cola::nms({make(0, 1, 0.5), make(2, 3, 0.4), make(4, 5, 0.3)}, 0.6).size() == 3);
  // Same interval but different class or video never suppresses.
  CHECK(cola::nms({make(0, 5, 0.9, 0), make(0, 5, 0.8, 1), make(0, 5, 0.7, 0, "w")}, 0.6).size() == 3);
}

TEST_CASE("nms: brute-force oracle on random instances") {
  Rng rng(3);
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    std::vector<Proposal> props;
    const std::size_t n = rng.below(11);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = static_cast<double>(rng.below(10));
      const double e = s + 1.0 + static_cast<double>(rng.below(6));
      props.push_back(make(s, e, std::round(rng.uniform() * 4.0) / 4.0, static_cast<int>(rng.below(2))));
    }
    const double thr = rng.uniform(0.1, 0.9);
    const auto kept = cola::nms(props, thr);
    REQUIRE(same_set(kept, oracle::nms(props, thr)));
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].class_id == kept[j].class_id)
          CHECK(oracle::iou(kept[i].start_sec, kept[i].end_sec, kept[j].start_sec, kept[j].end_sec) <= thr);
  }
}

TEST_CASE("nms: adding a lower-scored proposal keeps the higher-scored decisions") {
  Rng rng(4);
  for (std::size_t trial = 0; trial < 200; ++trial) {
    std::vector<Proposal> props;
    for (std::size_t i = 0; i < 6; ++i) {
      const double s = static_cast<double>(rng.below(10));
      props.push_back(make(s, s + 1 + rng.below(5), 0.5 + rng.uniform() * 0.5));
    }
    const auto before = cola::nms(props, 0.5);
    props.push_back(make(3, 6, 0.1));
    auto after = cola::nms(props, 0.5);
    after.erase(std::remove_if(after.begin(), after.end(), [](const Proposal& p) { return p.score == 0.1; }),
                after.end());
    CHECK(same_set(before, after));
  }
}

TEST_CASE("localize: a planted block yields one proposal covering it") {
  const cola::ModelParams params = block_model();
  Tensor2 features(64, 2);
  for (std::size_t t = 20; t < 30; ++t) features(t, 0) = 1.0;
  cola::VideoRecord record;
  record.video_id = "planted";
  cola::LocalizeSettings settings;
  const auto props = cola::localize_video(params, record, features, settings);
  // theta_s = 0 always adds a whole-video proposal; it ranks below the block.
  std::vector<Proposal> on_block;
  for (const Proposal& p : props) {
    CHECK(p.class_id == 0);
    if (oracle::iou(p.start_snippet, p.end_snippet, 20, 30) >= 0.9) on_block.push_back(p);
  }
  REQUIRE(on_block.size() == 1);
  CHECK(on_block[0].start_sec == doctest::Approx(20 * 16 / 25.0));
  CHECK(on_block[0].end_sec == doctest::Approx(30 * 16 / 25.0));
  for (const Proposal& p : props) CHECK(p.score <= on_block[0].score);
}

TEST_CASE("localize: index map converts back to original coordinates") {
  const cola::ModelParams params = block_model();
  Tensor2 features(128, 2);
  for (std::size_t t = 40; t < 60; ++t) features(t, 0) = 1.0;
  cola::VideoRecord record;
  record.video_id = "long";
  const auto props = cola::localize_video(params, record, features, {});
  bool found = false;
  for (const Proposal& p : props) found = found || (p.start_snippet == 40 && p.end_snippet == 60);
  CHECK(found);
}

TEST_CASE("localize: a one-threshold list equals a manual single pass") {
  const cola::ModelParams params = block_model();
  Rng rng(5);
  Tensor2 features(64, 2);
  for (std::size_t t = 0; t < 64; ++t) features(t, 0) = rng.uniform();
  cola::VideoRecord record;
  record.video_id = "v";
  cola::LocalizeSettings settings;
  settings.infer.theta_s = {0.4};
  const auto props = cola::localize_video(params, record, features, settings);

  std::vector<double> column(64);
  for (std::size_t t = 0; t < 64; ++t) column[t] = features(t, 0);
  const auto cas = cola::minmax_normalize(column);
  std::vector<Proposal> manual;
  for (const auto& iv : cola::segment_tcas(cas, 0.4)) {
    Proposal p = make(iv.start * 0.64, iv.end * 0.64, cola::score_proposal(cas, iv, 0.25));
    p.start_snippet = iv.start;
    p.end_snippet = iv.end;
    manual.push_back(p);
  }
  manual = cola::nms(manual, 0.6);
  cola::sort_canonical(manual);
  REQUIRE(props.size() == manual.size());
  for (std::size_t i = 0; i < props.size(); ++i) {
    CHECK(props[i].start_snippet == manual[i].start_snippet);
    CHECK(props[i].end_snippet == manual[i].end_snippet);
    CHECK(props[i].score == manual[i].score);
  }
}

TEST_CASE("proposal file round trip into detections") {
  std::vector<Proposal> props = {make(1, 2, 0.5, 1, "a"), make(3, 5, 0.25, 0, "b")};
  const std::vector<std::string> names = {"jump", "run"};
  const std::string text = cola::format_proposals(props, names);
  CHECK(text.find("\"class_name\":\"run\"") != std::string::npos);
  const auto dets = cola::parse_detections(text);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].video_id == "a");
  CHECK(dets[0].class_id == 1);
  CHECK(dets[1].end_sec == 5.0);
  CHECK(dets[1].score == 0.25);
}
