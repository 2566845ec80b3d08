#include "siq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "siq/nn.hpp"

namespace siq::synth {

namespace {

constexpr std::int64_t kEpochMs = 1'600'000'000'000;
constexpr std::int64_t kDayMs = 86'400'000;

std::string padded(char prefix, std::size_t value, std::size_t total) {
  std::size_t width = std::to_string(total).size();
  std::string digits = std::to_string(value);
  return std::string(1, prefix) + std::string(width - std::min(width, digits.size()), '0') + digits;
}

struct Generator {
  const SynthConfig& config;
  nn::Rng rng;
  std::normal_distribution<double> normal{0.0, 1.0};

  Generator(const SynthConfig& c, std::uint64_t stream) : config(c), rng(stream) {}

  double gauss() { return normal(rng.engine()); }
  double uniform() { return rng.uniform(); }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }
  int poisson(double mean) { return std::poisson_distribution<int>(mean)(rng.engine()); }
};

struct Position {
  double x = 400;
  double y = 300;
};

// One first-trial session ending just before `submit_ms`. Lower
// performance means a longer think time, more stray clicks and longer
// pauses between clicks.
std::vector<ingest::MouseEvent> session(Generator& g, const std::string& student,
                                        const std::string& question, std::int64_t submit_ms,
                                        double performance) {
  const double think = std::clamp(3000.0 * std::exp(-0.5 * performance + 0.25 * g.gauss()), 300.0, 60000.0);
  const int answer_clicks = 1 + static_cast<int>(g.uniform() * 3.0);
  const int stray_clicks = g.poisson(std::max(0.2, 1.2 - 0.6 * performance));
  const int clicks = answer_clicks + stray_clicks;

  struct Draft {
    ingest::EventType type;
    double offset_ms;
    Position at;
  };
  std::vector<Draft> drafts;
  Position pos{g.uniform() * 800.0, g.uniform() * 600.0};
  auto wander = [&](double scale) {
    pos.x = std::clamp(pos.x + scale * g.gauss(), 0.0, 800.0);
    pos.y = std::clamp(pos.y + scale * g.gauss(), 0.0, 600.0);
  };
  double t = 0.0;
  for (int i = 0; i < 3; ++i) {
    drafts.push_back({ingest::EventType::MouseMove, t, pos});
    t += think / 3.0;
    wander(60.0);
  }
  for (int c = 0; c < clicks; ++c) {
    if (c > 0) {
      t += std::clamp(800.0 * std::exp(-0.3 * performance + 0.3 * g.gauss()), 100.0, 20000.0);
      wander(80.0);
      drafts.push_back({ingest::EventType::MouseMove, t - 50.0, pos});
    }
    drafts.push_back({ingest::EventType::MouseDown, t, pos});
    const bool drag = g.uniform() < 0.3;
    const int moves = drag ? 2 : static_cast<int>(g.uniform() * 2.0);
    double press = 120.0 + 300.0 * g.uniform();
    for (int m = 1; m <= moves; ++m) {
      wander(drag ? 40.0 : 1.0);
      drafts.push_back({ingest::EventType::MouseMove, t + press * m / (moves + 1), pos});
    }
    t += press;
    drafts.push_back({ingest::EventType::MouseUp, t, pos});
  }
  t += 300.0;
  wander(30.0);
  drafts.push_back({ingest::EventType::MouseMove, t, pos});

  const auto total = static_cast<std::int64_t>(std::llround(t));
  const std::int64_t start = submit_ms - 200 - total;
  std::vector<ingest::MouseEvent> out;
  out.reserve(drafts.size());
  for (const auto& d : drafts) {
    out.push_back({student, question, d.type, start + static_cast<std::int64_t>(std::llround(d.offset_ms)),
                   std::round(d.at.x), std::round(d.at.y)});
  }
  return out;
}

SynthData generate_once(const SynthConfig& config, int offset_draw) {
  Generator g(config, config.seed);
  Generator offset_rng(config, config.seed * 0x9E3779B97F4A7C15ULL + 0x5851F42D4C957F2DULL +
                                   static_cast<std::uint64_t>(offset_draw));
  SynthData data;
  data.offset_draws = offset_draw + 1;
  const std::int64_t window = static_cast<std::int64_t>(config.window_days) * kDayMs;
  data.mouse_start_ms = kEpochMs + static_cast<std::int64_t>(config.mouse_start_fraction * static_cast<double>(window));
  const std::int64_t last_release = kEpochMs + window * 4 / 5;

  const std::size_t nq = config.num_questions;
  const std::size_t ns = config.num_students;
  const std::size_t dim = config.latent_dim;
  std::vector<std::int64_t> release(nq, kEpochMs);
  auto& latent = data.latent;
  for (std::size_t j = 0; j < nq; ++j) {
    ingest::QuestionMeta meta;
    meta.question_id = padded('q', j + 1, nq);
    meta.grade = static_cast<int>(g.uniform_int(0, 12));
    meta.difficulty = static_cast<int>(g.uniform_int(1, 5));
    meta.math_dimension = math_dimension_name(static_cast<std::size_t>(
        g.uniform_int(0, static_cast<std::int64_t>(config.num_math_dimensions) - 1)));
    data.questions.push_back(meta);
    if (g.uniform() < config.late_release_fraction) {
      release[j] = data.mouse_start_ms + static_cast<std::int64_t>(
                                             g.uniform() * static_cast<double>(last_release - data.mouse_start_ms));
    }
    std::vector<double> q(dim, 0.0);
    q[0] = 1.0;
    for (std::size_t k = 1; k < dim; ++k) q[k] = config.loading_sigma * g.gauss();
    latent.loadings.push_back(std::move(q));
    latent.offsets.push_back(config.difficulty_step * (meta.difficulty - 3) +
                             config.offset_jitter * offset_rng.gauss());
  }

  const double sigma_log = 0.6;
  const double mu_log = std::log(config.interactions_per_student) - sigma_log * sigma_log / 2.0;
  std::array<std::size_t, 4> level_counts{};
  std::size_t first_count = 0;
  for (std::size_t i = 0; i < ns; ++i) {
    const std::string student = padded('s', i + 1, ns);
    const int grade = static_cast<int>(g.uniform_int(1, 11));
    latent.student_grades.push_back(grade);
    std::vector<double> a(dim);
    for (double& v : a) v = config.ability_sigma * g.gauss();
    latent.abilities.push_back(a);

    auto count = static_cast<std::size_t>(std::llround(std::exp(mu_log + sigma_log * g.gauss())));
    count = std::clamp<std::size_t>(count, 1, nq);

    // Weighted sampling without replacement (largest u^(1/w) keys).
    std::vector<std::pair<double, std::size_t>> keys;
    for (std::size_t j = 0; j < nq; ++j) {
      double w = std::exp(-std::abs(grade - data.questions[j].grade) / config.grade_affinity_scale);
      keys.emplace_back(std::log(std::max(g.uniform(), 1e-300)) / w, j);
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                      [](const auto& x, const auto& y) { return x.first > y.first; });

    struct Attempt {
      std::size_t question;
      std::int64_t ts;
    };
    std::vector<Attempt> attempts;
    for (std::size_t k = 0; k < count; ++k) {
      std::size_t j = keys[k].second;
      std::int64_t from = release[j];
      attempts.push_back({j, g.uniform_int(from, kEpochMs + window - 1)});
    }
    std::sort(attempts.begin(), attempts.end(),
              [](const Attempt& x, const Attempt& y) { return x.ts < y.ts; });

    for (const auto& at : attempts) {
      const auto& meta = data.questions[at.question];
      const double performance = affinity(latent, i, at.question) - latent.offsets[at.question] +
                                 config.noise_sigma * g.gauss();
      const int raw = raw_score(performance, 0.0, 0.0);
      data.scores.push_back({student, meta.question_id, raw, at.ts, 1});
      ++level_counts[static_cast<std::size_t>(ingest::map_score_level(raw).value())];
      ++first_count;

      auto events = session(g, student, meta.question_id, at.ts, performance);
      if (events.front().t_ms >= data.mouse_start_ms) {
        data.events.insert(data.events.end(), events.begin(), events.end());
      }
      if (raw < 100 && g.uniform() < config.second_trial_probability) {
        std::int64_t later = at.ts + g.uniform_int(3'600'000, 3 * kDayMs);
        int retry = std::min(100, raw_score(performance + 0.8, 0.0, config.noise_sigma * g.gauss()));
        data.scores.push_back({student, meta.question_id, retry, later, 2});
      }
    }
  }
  std::stable_sort(data.scores.begin(), data.scores.end(),
                   [](const ingest::ScoreRecord& x, const ingest::ScoreRecord& y) {
                     return x.timestamp_ms < y.timestamp_ms;
                   });
  for (std::size_t l = 0; l < 4; ++l) {
    data.level_frequency[l] = static_cast<double>(level_counts[l]) / static_cast<double>(first_count);
  }
  return data;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_students < 1 || num_questions < 1 || latent_dim < 1 || num_math_dimensions < 1) {
    throw std::invalid_argument("synthetic counts must be at least 1");
  }
  if (!(interactions_per_student >= 1.0)) {
    throw std::invalid_argument("interactions_per_student must be at least 1");
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
  if (window_days < 1) throw std::invalid_argument("window_days must be at least 1");
  if (!(mouse_start_fraction >= 0.0 && mouse_start_fraction < 0.8)) {
    throw std::invalid_argument("mouse_start_fraction must lie in [0, 0.8)");
  }
  if (!(late_release_fraction >= 0.0 && late_release_fraction <= 1.0) ||
      !(second_trial_probability >= 0.0 && second_trial_probability <= 1.0)) {
    throw std::invalid_argument("probabilities must lie in [0, 1]");
  }
  if (!(grade_affinity_scale > 0.0)) throw std::invalid_argument("grade_affinity_scale must be positive");
}

int raw_score(double affinity, double offset, double noise) {
  double raw = 50.0 + 12.0 * (affinity - offset + noise);
  return static_cast<int>(std::clamp(std::round(raw), 0.0, 100.0));
}

double affinity(const LatentModel& model, std::size_t student, std::size_t question) {
  const auto& a = model.abilities.at(student);
  const auto& q = model.loadings.at(question);
  return std::inner_product(a.begin(), a.end(), q.begin(), 0.0);
}

std::string math_dimension_name(std::size_t index) { return "dim" + std::to_string(index + 1); }

SynthData generate(const SynthConfig& config) {
  config.validate();
  constexpr int kMaxDraws = 50;
  for (int draw = 0;; ++draw) {
    SynthData data = generate_once(config, draw);
    bool covered = std::all_of(data.level_frequency.begin(), data.level_frequency.end(),
                               [](double f) { return f >= 0.05; });
    if (covered || draw + 1 == kMaxDraws) return data;
  }
}

void write_files(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("events.jsonl");
    for (const auto& e : data.events) {
      out << "{\"student_id\":\"" << e.student_id << "\",\"question_id\":\"" << e.question_id
          << "\",\"event_type\":\"" << ingest::to_string(e.type) << "\",\"t_ms\":" << e.t_ms
          << ",\"x\":" << static_cast<long long>(e.x) << ",\"y\":" << static_cast<long long>(e.y)
          << "}\n";
    }
  }
  {
    auto out = open("scores.csv");
    out << "student_id,question_id,raw_score,timestamp_ms\n";
    for (const auto& s : data.scores) {
      out << s.student_id << ',' << s.question_id << ',' << s.raw_score << ',' << s.timestamp_ms << '\n';
    }
  }
  {
    auto out = open("questions.csv");
    out << "question_id,grade,difficulty,math_dimension\n";
    for (const auto& q : data.questions) {
      out << q.question_id << ',' << q.grade << ',' << q.difficulty << ',' << q.math_dimension << '\n';
    }
  }
}

Description describe(const SynthConfig& config, std::size_t samples) {
  SynthData data = generate(config);
  Description d;
  d.latent_dim = config.latent_dim;
  d.seed = config.seed;
  d.num_students = config.num_students;
  d.num_questions = config.num_questions;
  d.noise_sigma = config.noise_sigma;
  Generator g(config, config.seed ^ 0xD1B54A32D192ED03ULL);
  std::array<std::size_t, 4> counts{};
  for (std::size_t k = 0; k < samples; ++k) {
    auto i = static_cast<std::size_t>(g.uniform_int(0, static_cast<std::int64_t>(config.num_students) - 1));
    auto j = static_cast<std::size_t>(g.uniform_int(0, static_cast<std::int64_t>(config.num_questions) - 1));
    int raw = raw_score(affinity(data.latent, i, j), data.latent.offsets[j],
                        config.noise_sigma * g.gauss());
    ++counts[static_cast<std::size_t>(ingest::map_score_level(raw).value())];
  }
  for (std::size_t l = 0; l < 4; ++l) {
    d.expected_level_frequency[l] = samples == 0 ? 0.0 : static_cast<double>(counts[l]) / static_cast<double>(samples);
  }
  return d;
}

}  // namespace siq::synth
