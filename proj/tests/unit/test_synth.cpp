#include <filesystem>

#include "doctest.h"
#include "siq/graph.hpp"
#include "siq/ingest.hpp"
#include "siq/synth.hpp"

using namespace siq;
namespace fs = std::filesystem;

namespace {

synth::SynthConfig small_config(std::uint64_t seed = 4) {
  synth::SynthConfig c;
  c.num_students = 40;
  c.num_questions = 25;
  c.interactions_per_student = 12;
  c.seed = seed;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("synth: raw score rule") {
  CHECK(synth::raw_score(0.0, 0.0, 0.0) == 50);
  CHECK(ingest::map_score_level(synth::raw_score(0.0, 0.0, 0.0)).value() == 2);
  CHECK(synth::raw_score(100.0, 0.0, 0.0) == 100);
  CHECK(synth::raw_score(-100.0, 0.0, 0.0) == 0);
  CHECK(synth::raw_score(1.0, 0.5, 0.25) == 59);
}

TEST_CASE("synth: same seed, identical bytes") {
  auto a = fresh_dir("siq_synth_a");
  auto b = fresh_dir("siq_synth_b");
  synth::write_files(synth::generate(small_config()), a);
  synth::write_files(synth::generate(small_config()), b);
  for (const char* f : {"events.jsonl", "scores.csv", "questions.csv"}) {
    CHECK(ingest::read_file(a / f) == ingest::read_file(b / f));
  }
  auto c = fresh_dir("siq_synth_c");
  synth::write_files(synth::generate(small_config(5)), c);
  CHECK(ingest::read_file(a / "scores.csv") != ingest::read_file(c / "scores.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("synth: every level is represented") {
  auto data = synth::generate(small_config());
  for (double f : data.level_frequency) CHECK(f >= 0.05);
  std::array<double, 4> counted{};
  double n = 0;
  for (const auto& r : data.scores) {
    if (r.trial_index != 1) continue;
    counted[ingest::map_score_level(r.raw_score).value()] += 1;
    n += 1;
  }
  for (std::size_t k = 0; k < 4; ++k) CHECK(counted[k] / n == doctest::Approx(data.level_frequency[k]));
}

TEST_CASE("synth: files load back without discards") {
  auto data = synth::generate(small_config());
  auto dir = fresh_dir("siq_synth_rt");
  synth::write_files(data, dir);
  auto events = ingest::load_events(dir / "events.jsonl");
  auto scores = ingest::load_scores(dir / "scores.csv");
  auto questions = ingest::load_questions(dir / "questions.csv");
  CHECK(events.discarded == 0);
  CHECK(scores.discarded == 0);
  CHECK(questions.discarded == 0);
  CHECK(scores.items.size() == data.scores.size());
  CHECK(questions.items.size() == 25);
  std::size_t n_events = 0;
  for (const auto& t : events.items) {
    n_events += t.events.size();
    bool has_down = false, has_up = false;
    for (const auto& e : t.events) {
      has_down = has_down || e.type == ingest::EventType::MouseDown;
      has_up = has_up || e.type == ingest::EventType::MouseUp;
    }
    CHECK(has_down);
    CHECK(has_up);
  }
  CHECK(n_events == data.events.size());
  for (std::size_t i = 0; i < scores.items.size(); ++i) {
    CHECK(scores.items[i].trial_index == data.scores[i].trial_index);
  }
  // Every session belongs to a scored attempt.
  auto dataset = graph::prepare_dataset(scores.items, events.items, questions.items);
  CHECK(dataset.skipped_trajectories == 0);
  fs::remove_all(dir);
}

TEST_CASE("synth: description") {
  auto d = synth::describe(small_config(77), 2000);
  CHECK(d.latent_dim == 8);
  CHECK(d.seed == 77);
  CHECK(d.num_students == 40);
  double total = 0;
  for (double f : d.expected_level_frequency) total += f;
  CHECK(total == doctest::Approx(1.0));
  synth::SynthConfig bad = small_config();
  bad.num_students = 0;
  CHECK_THROWS(bad.validate());
}
