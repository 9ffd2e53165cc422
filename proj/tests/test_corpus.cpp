// SPDX-License-Identifier: Apache-2.0
#include "capqa/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "capqa/errors.hpp"
#include "support/fixtures.hpp"

using namespace capqa;
using test::CaptionSpec;

namespace {

/// Minimal caption-source service for wire-contract tests.
class CaptionServer {
 public:
  explicit CaptionServer(httplib::Server::Handler handler) {
    server_.Post("/captions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~CaptionServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_CASE("caption tracks load sorted regardless of record order") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "captions.jsonl",
                       {{"v1", 2.0, 3.0, "third", {}},
                        {"v1", 0.0, 1.0, "first", {}},
                        {"v1", 1.0, 2.0, "second", {}}},
                       1.0);
  const auto tracks = load_caption_tracks(dir / "captions.jsonl");
  REQUIRE(tracks.size() == 1);
  REQUIRE(tracks[0].clips.size() == 3);
  CHECK(tracks[0].clips[0].text == "first");
  CHECK(tracks[0].clips[1].text == "second");
  CHECK(tracks[0].clips[2].text == "third");
  CHECK(tracks[0].native_clip_length_s == 1.0);
}

TEST_CASE("a zero-length clip is an error naming the record") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "captions.jsonl", {{"v1", 0.0, 1.0, "ok", {}},
                                                {"v1", 5.0, 5.0, "broken", {}}});
  CHECK_THROWS_WITH_AS(load_caption_tracks(dir / "captions.jsonl"),
                       doctest::Contains("end_s must be greater than start_s"), CorpusError);
  try {
    load_caption_tracks(dir / "captions.jsonl");
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);  // header + 2 records
  }
}

TEST_CASE("two interleaved videos split into two sorted tracks") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "captions.jsonl", {{"vb", 1.0, 2.0, "b2", {}},
                                                {"va", 1.0, 2.0, "a2", {}},
                                                {"vb", 0.0, 1.0, "b1", {}},
                                                {"va", 0.0, 1.0, "a1", {}}});
  const auto tracks = load_caption_tracks(dir / "captions.jsonl");
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].video_id == "va");
  CHECK(tracks[0].clips[0].text == "a1");
  CHECK(tracks[0].clips[1].text == "a2");
  CHECK(tracks[1].video_id == "vb");
  CHECK(tracks[1].clips[0].text == "b1");
  CHECK(tracks[1].clips[1].text == "b2");
}

TEST_CASE("overlapping clips are fatal, gaps are not") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "gappy.jsonl", {{"v1", 0.0, 1.0, "a", {}},
                                             {"v1", 5.0, 6.0, "b", {}}});
  CHECK_NOTHROW(load_caption_tracks(dir / "gappy.jsonl"));

  test::write_captions(dir / "overlap.jsonl", {{"v1", 0.0, 2.0, "a", {}},
                                               {"v1", 1.0, 3.0, "b", {}}});
  CHECK_THROWS_WITH_AS(load_caption_tracks(dir / "overlap.jsonl"),
                       doctest::Contains("overlapping clips"), CorpusError);
}

TEST_CASE("loading is idempotent") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "captions.jsonl",
                       {{"v1", 0.0, 1.0, "a", 0}, {"v1", 1.0, 2.0, "b", 2}}, 1.0, 2, 1.0);
  const auto first = load_caption_tracks(dir / "captions.jsonl");
  const auto second = load_caption_tracks(dir / "captions.jsonl");
  REQUIRE(first.size() == second.size());
  REQUIRE(first[0].clips.size() == second[0].clips.size());
  CHECK(first[0].frame_stride == second[0].frame_stride);
  for (std::size_t i = 0; i < first[0].clips.size(); ++i) {
    CHECK(first[0].clips[i].text == second[0].clips[i].text);
    CHECK(first[0].clips[i].frame_index == second[0].clips[i].frame_index);
  }
}

TEST_CASE("frame indices must increase with start time") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "captions.jsonl",
                       {{"v1", 0.0, 1.0, "a", 4}, {"v1", 1.0, 2.0, "b", 2}});
  CHECK_THROWS_WITH_AS(load_caption_tracks(dir / "captions.jsonl"),
                       doctest::Contains("frame_index"), CorpusError);
}

TEST_CASE("an empty corpus is an error") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "captions.jsonl", {});
  CHECK_THROWS_WITH_AS(load_caption_tracks(dir / "captions.jsonl"),
                       doctest::Contains("empty corpus"), CorpusError);
  test::write_text(dir / "headerless.jsonl", "");
  CHECK_THROWS_AS(load_caption_tracks(dir / "headerless.jsonl"), CorpusError);
}

TEST_CASE("qa records need exactly five options") {
  const auto dir = test::make_temp_dir("corpus");
  std::ofstream out(dir / "qa.jsonl");
  out << R"({"format":"capqa/qa","version":1})" << "\n";
  out << R"({"qa_id":"q1","video_id":"v1","question":"?","options":["a","b","c","d"]})" << "\n";
  out.close();
  CHECK_THROWS_WITH_AS(load_qa(dir / "qa.jsonl"), doctest::Contains("expected 5 options"),
                       CorpusError);
}

TEST_CASE("qa answer keys are optional") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_qa(dir / "qa.jsonl",
                 {{"q1", "v1", "what?", {"a", "b", "c", "d", "e"}, std::nullopt, {}}});
  const auto items = load_qa(dir / "qa.jsonl");
  REQUIRE(items.size() == 1);
  CHECK_FALSE(items[0].answer_index.has_value());
}

TEST_CASE("500 generated qa items load with unique ids in qa_id order") {
  const auto dir = test::make_temp_dir("corpus");
  std::vector<test::QaSpec> items;
  for (int i = 499; i >= 0; --i) {  // write in reverse to exercise the sort
    char id[16];
    std::snprintf(id, sizeof(id), "q%04d", i);
    items.push_back({id, "v1", "question " + std::to_string(i),
                     {"a", "b", "c", "d", "e"}, i % 5, {}});
  }
  test::write_qa(dir / "qa.jsonl", items);
  const auto loaded = load_qa(dir / "qa.jsonl");
  REQUIRE(loaded.size() == 500);
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    CHECK(loaded[i - 1].qa_id < loaded[i].qa_id);
  }
}

TEST_CASE("duplicate qa ids are fatal") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_qa(dir / "qa.jsonl", {{"q1", "v1", "?", {"a", "b", "c", "d", "e"}, 0, {}},
                                    {"q1", "v1", "?", {"a", "b", "c", "d", "e"}, 1, {}}});
  CHECK_THROWS_WITH_AS(load_qa(dir / "qa.jsonl"), doctest::Contains("duplicate qa_id"),
                       CorpusError);
}

TEST_CASE("grounding labels load, merge, and sort") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_grounding(dir / "g.jsonl", {{"qa_7", {{10.0, 30.0}}},
                                          {"qa_8", {{40.0, 50.0}, {5.0, 9.0}}}});
  const auto labels = load_grounding(dir / "g.jsonl");
  REQUIRE(labels.size() == 2);
  REQUIRE(labels.at("qa_7").segments.size() == 1);
  CHECK(labels.at("qa_7").segments[0].start_s == 10.0);
  REQUIRE(labels.at("qa_8").segments.size() == 2);
  CHECK(labels.at("qa_8").segments[0].start_s == 5.0);  // sorted
  CHECK(labels.at("qa_8").segments[1].start_s == 40.0);
}

TEST_CASE("inverted grounding segments are fatal") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_grounding(dir / "g.jsonl", {{"qa_1", {{30.0, 10.0}}}});
  CHECK_THROWS_WITH_AS(load_grounding(dir / "g.jsonl"), doctest::Contains("inverted segment"),
                       CorpusError);
}

TEST_CASE("every grounding qa_id that exists in the QA set is retrievable") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_qa(dir / "qa.jsonl", {{"q1", "v1", "?", {"a", "b", "c", "d", "e"}, 0, {}},
                                    {"q2", "v1", "?", {"a", "b", "c", "d", "e"}, 0, {}}});
  test::write_grounding(dir / "g.jsonl",
                        {{"q1", {{0.0, 1.0}}}, {"q2", {{1.0, 2.0}}}, {"orphan", {{0.0, 9.0}}}});
  const auto qa = load_qa(dir / "qa.jsonl");
  const auto labels = load_grounding(dir / "g.jsonl");
  for (const auto& item : qa) {
    CHECK(labels.count(item.qa_id) == 1);
  }
  CHECK(labels.count("orphan") == 1);  // retained, flagged downstream
}

TEST_CASE("categories validate against the declared vocabulary") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_categories(dir / "cats.jsonl", {"goal", "tools"},
                         {{"q1", {"goal"}}, {"q2", {"tools", "goal"}}});
  const auto map = load_categories(dir / "cats.jsonl");
  CHECK(map.vocabulary.size() == 2);
  CHECK(map.by_qa_id.at("q2").size() == 2);

  test::write_categories(dir / "bad.jsonl", {"goal"}, {{"q1", {"mystery"}}});
  CHECK_THROWS_WITH_AS(load_categories(dir / "bad.jsonl"),
                       doctest::Contains("not in the declared vocabulary"), CorpusError);
}

TEST_CASE("caption write/load round-trip") {
  const auto dir = test::make_temp_dir("corpus");
  test::write_captions(dir / "in.jsonl", {{"v1", 0.0, 1.0, "a", 0}, {"v1", 1.0, 2.0, "b", 2}},
                       1.0, 2);
  const auto tracks = load_caption_tracks(dir / "in.jsonl");
  write_caption_tracks(dir / "out.jsonl", tracks);
  const auto reloaded = load_caption_tracks(dir / "out.jsonl");
  REQUIRE(reloaded.size() == tracks.size());
  CHECK(reloaded[0].native_clip_length_s == tracks[0].native_clip_length_s);
  CHECK(reloaded[0].frame_stride == tracks[0].frame_stride);
  REQUIRE(reloaded[0].clips.size() == tracks[0].clips.size());
  for (std::size_t i = 0; i < tracks[0].clips.size(); ++i) {
    CHECK(reloaded[0].clips[i].text == tracks[0].clips[i].text);
    CHECK(reloaded[0].clips[i].frame_index == tracks[0].clips[i].frame_index);
  }
}

TEST_CASE("remote fetch returns a valid track and persists it") {
  CaptionServer server([](const httplib::Request& req, httplib::Response& res) {
    const auto body = test::json::parse(req.body);
    CHECK(body.at("video_id") == "v_remote");
    res.set_content(R"({"clips":[
      {"start_s":0.0,"end_s":1.0,"text":"one"},
      {"start_s":1.0,"end_s":2.0,"text":"two"},
      {"start_s":2.0,"end_s":3.0,"text":"three"}],
      "native_clip_length_s":1.0})",
                    "application/json");
  });

  const auto cache_dir = test::make_temp_dir("fetch_cache");
  FetchOptions options;
  options.cache_dir = cache_dir;
  const auto track = fetch_captions_remote(server.endpoint(), "v_remote", {0.0, 3.0}, options);
  REQUIRE(track.clips.size() == 3);
  CHECK(track.clips[2].text == "three");
  CHECK(track.native_clip_length_s == 1.0);

  const auto cached = cache_dir / "v_remote.captions.jsonl";
  REQUIRE(std::filesystem::exists(cached));
  const auto reloaded = load_caption_tracks(cached);
  REQUIRE(reloaded.size() == 1);
  CHECK(reloaded[0].clips.size() == 3);
}

TEST_CASE("remote fetch rejects overlapping clips as a schema violation") {
  CaptionServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"clips":[
      {"start_s":0.0,"end_s":2.0,"text":"one"},
      {"start_s":1.0,"end_s":3.0,"text":"two"}]})",
                    "application/json");
  });
  CHECK_THROWS_AS(fetch_captions_remote(server.endpoint(), "v", {0.0, 3.0}), SchemaError);
}

TEST_CASE("remote fetch retries through transient failures") {
  std::atomic<int> hits{0};
  CaptionServer server([&](const httplib::Request&, httplib::Response& res) {
    if (hits.fetch_add(1) < 2) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"clips":[{"start_s":0.0,"end_s":1.0,"text":"late"}]})",
                    "application/json");
  });

  int attempts_logged = 0;
  FetchOptions options;
  options.base_delay_ms = 1;
  options.max_delay_ms = 2;
  options.on_attempt = [&](int, const std::string&) { ++attempts_logged; };
  const auto track = fetch_captions_remote(server.endpoint(), "v", {0.0, 1.0}, options);
  REQUIRE(track.clips.size() == 1);
  CHECK(track.clips[0].text == "late");
  CHECK(hits.load() == 3);
  CHECK(attempts_logged == 2);  // two failed attempts were retried
}

TEST_CASE("remote fetch gives up after the retry budget") {
  CaptionServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  FetchOptions options;
  options.max_attempts = 2;
  options.base_delay_ms = 1;
  CHECK_THROWS_WITH_AS(fetch_captions_remote(server.endpoint(), "v", {0.0, 1.0}, options),
                       doctest::Contains("after 2 attempts"), TransportError);
}

TEST_CASE("loaded tracks are always sorted non-overlapping covers") {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> clip_count(1, 40);
  std::uniform_real_distribution<double> gap(0.0, 2.0);
  const auto dir = test::make_temp_dir("corpus_prop");

  for (int iter = 0; iter < 30; ++iter) {
    std::vector<test::CaptionSpec> clips;
    const int videos = 1 + iter % 3;
    for (int v = 0; v < videos; ++v) {
      double at = gap(rng);
      const int n = clip_count(rng);
      for (int c = 0; c < n; ++c) {
        const double len = 0.5 + gap(rng);
        clips.push_back({"v" + std::to_string(v), at, at + len, "t" + std::to_string(c), {}});
        at += len + gap(rng);  // gaps are legal, overlaps are not
      }
    }
    std::shuffle(clips.begin(), clips.end(), rng);
    const auto path = dir / ("prop_" + std::to_string(iter) + ".jsonl");
    test::write_captions(path, clips);

    for (const auto& track : load_caption_tracks(path)) {
      for (std::size_t i = 1; i < track.clips.size(); ++i) {
        REQUIRE(track.clips[i].start_s >= track.clips[i - 1].end_s - 1e-9);
        REQUIRE(track.clips[i].end_s > track.clips[i].start_s);
      }
    }
  }
}

TEST_CASE("remote fetch fails fast on client errors") {
  CaptionServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 404;
    res.set_content("unknown video", "text/plain");
  });
  CHECK_THROWS_WITH_AS(fetch_captions_remote(server.endpoint(), "nope", {0.0, 1.0}),
                       doctest::Contains("status 404"), TransportError);
}
