#include "siq/config.hpp"

#include <charconv>
#include <cstdlib>
#include <set>
#include <sstream>
#include <stdexcept>

namespace siq::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    auto word = trim(text.substr(start, end - start));
    if (!word.empty()) out.emplace_back(word);
    start = end + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? "," : "") + words[i];
  return out;
}

template <typename T>
T parse_number(std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("'" + std::string(text) + "' is not a valid number");
  }
  return value;
}

bool parse_bool(std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("'" + std::string(text) + "' is not true or false");
}

template <typename T>
std::vector<T> parse_list(std::string_view text) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(parse_number<T>(trim(text.substr(start, end - start))));
    start = end + 1;
  }
  return out;
}

template <typename T>
std::string show(T value) {
  if constexpr (std::is_floating_point_v<T>) {
    return train::format_number(value);
  } else {
    return std::to_string(value);
  }
}

template <typename T>
std::string show_list(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + show(values[i]);
  return out;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Entry number(std::string key, T RunConfig::*outer) {
  return {std::move(key), [outer](RunConfig& c, std::string_view v) { c.*outer = parse_number<T>(v); },
          [outer](const RunConfig& c) { return show(c.*outer); }};
}

template <typename T, typename Field>
Entry nested(std::string key, std::function<Field&(RunConfig&)> pick) {
  return {std::move(key),
          [pick](RunConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<Field, bool>) {
              pick(c) = parse_bool(v);
            } else {
              pick(c) = static_cast<Field>(parse_number<T>(v));
            }
          },
          [pick](const RunConfig& c) {
            Field& f = pick(const_cast<RunConfig&>(c));
            if constexpr (std::is_same_v<Field, bool>) {
              return std::string(f ? "true" : "false");
            } else {
              return show(static_cast<T>(f));
            }
          }};
}

#define SIQ_FIELD(type, key, expr) \
  nested<type, std::remove_reference_t<decltype(std::declval<RunConfig&>().expr)>>( \
      key, [](RunConfig& c) -> auto& { return c.expr; })

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(number("seed", &RunConfig::seed));
    t.push_back({"out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); },
                 [](const RunConfig& c) { return c.out.string(); }});
    t.push_back({"events_path", [](RunConfig& c, std::string_view v) { c.events_path = std::string(v); },
                 [](const RunConfig& c) { return c.events_path.string(); }});
    t.push_back({"scores_path", [](RunConfig& c, std::string_view v) { c.scores_path = std::string(v); },
                 [](const RunConfig& c) { return c.scores_path.string(); }});
    t.push_back({"questions_path",
                 [](RunConfig& c, std::string_view v) { c.questions_path = std::string(v); },
                 [](const RunConfig& c) { return c.questions_path.string(); }});

    t.push_back(SIQ_FIELD(std::size_t, "num_students", synth.num_students));
    t.push_back(SIQ_FIELD(std::size_t, "num_questions", synth.num_questions));
    t.push_back(SIQ_FIELD(double, "interactions_per_student", synth.interactions_per_student));
    t.push_back(SIQ_FIELD(std::size_t, "latent_dim", synth.latent_dim));
    t.push_back(SIQ_FIELD(double, "noise_sigma", synth.noise_sigma));
    t.push_back(SIQ_FIELD(std::size_t, "num_math_dimensions", synth.num_math_dimensions));
    t.push_back(SIQ_FIELD(double, "ability_sigma", synth.ability_sigma));
    t.push_back(SIQ_FIELD(double, "loading_sigma", synth.loading_sigma));
    t.push_back(SIQ_FIELD(double, "difficulty_step", synth.difficulty_step));
    t.push_back(SIQ_FIELD(double, "offset_jitter", synth.offset_jitter));
    t.push_back(SIQ_FIELD(double, "late_release_fraction", synth.late_release_fraction));
    t.push_back(SIQ_FIELD(double, "second_trial_probability", synth.second_trial_probability));
    t.push_back(SIQ_FIELD(int, "window_days", synth.window_days));
    t.push_back(SIQ_FIELD(double, "mouse_start_fraction", synth.mouse_start_fraction));
    t.push_back(SIQ_FIELD(double, "grade_affinity_scale", synth.grade_affinity_scale));

    t.push_back(SIQ_FIELD(double, "drag_threshold_px", mouse.drag_threshold_px));
    t.push_back(SIQ_FIELD(std::int64_t, "attempt_gap_ms", mouse.attempt_gap_ms));
    t.push_back(SIQ_FIELD(std::int64_t, "utc_offset_minutes", mouse.utc_offset_minutes));
    t.push_back({"score_thresholds",
                 [](RunConfig& c, std::string_view v) { c.thresholds.bounds = parse_list<int>(v); },
                 [](const RunConfig& c) { return show_list(c.thresholds.bounds); }});
    t.push_back({"feature_cutoff_ms",
                 [](RunConfig& c, std::string_view v) {
                   if (v == "auto") {
                     c.feature_cutoff_ms.reset();
                   } else {
                     c.feature_cutoff_ms = parse_number<std::int64_t>(v);
                   }
                 },
                 [](const RunConfig& c) {
                   return c.feature_cutoff_ms ? show(*c.feature_cutoff_ms) : std::string("auto");
                 }});

    t.push_back(SIQ_FIELD(double, "train_fraction", snapshot.fractions.train));
    t.push_back(SIQ_FIELD(double, "val_fraction", snapshot.fractions.validation));
    t.push_back(SIQ_FIELD(std::size_t, "min_records", snapshot.min_records));
    t.push_back(SIQ_FIELD(std::size_t, "max_students", max_students));
    t.push_back({"students", [](RunConfig& c, std::string_view v) { c.students = split_words(v); },
                 [](const RunConfig& c) { return join(c.students); }});

    t.push_back(SIQ_FIELD(std::size_t, "layers", experiment.model.layers));
    t.push_back(SIQ_FIELD(std::size_t, "hidden", experiment.model.hidden));
    t.push_back(SIQ_FIELD(std::size_t, "readout_hidden", experiment.model.readout_hidden));
    t.push_back(SIQ_FIELD(double, "lr", experiment.train.lr));
    t.push_back(SIQ_FIELD(double, "weight_decay", experiment.train.weight_decay));
    t.push_back(SIQ_FIELD(bool, "decoupled_weight_decay", experiment.train.decoupled_weight_decay));
    t.push_back(SIQ_FIELD(int, "max_epochs", experiment.train.max_epochs));
    t.push_back(SIQ_FIELD(int, "patience", experiment.train.patience));
    t.push_back(SIQ_FIELD(int, "runs", experiment.train.runs));
    t.push_back(SIQ_FIELD(double, "label_fraction", experiment.train.label_fraction));
    t.push_back(SIQ_FIELD(double, "logistic_lr", experiment.logistic.lr));
    t.push_back(SIQ_FIELD(int, "logistic_epochs", experiment.logistic.epochs));
    t.push_back(SIQ_FIELD(double, "logistic_l2", experiment.logistic.l2));
    t.push_back({"sweep_fractions",
                 [](RunConfig& c, std::string_view v) { c.sweep_fractions = parse_list<double>(v); },
                 [](const RunConfig& c) { return show_list(c.sweep_fractions); }});
    t.push_back(SIQ_FIELD(std::size_t, "workers", workers));
    t.push_back({"methods",
                 [](RunConfig& c, std::string_view v) {
                   c.methods.clear();
                   for (const auto& w : split_words(v)) c.methods.push_back(train::parse_method(w));
                 },
                 [](const RunConfig& c) {
                   std::vector<std::string> names;
                   for (auto m : c.methods) names.emplace_back(train::to_string(m));
                   return join(names);
                 }});
    return t;
  }();
  return table;
}

#undef SIQ_FIELD

const Entry* find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

void sync_seed(RunConfig& c) {
  c.synth.seed = c.seed;
  c.experiment.train.seed = c.seed;
}

}  // namespace

void RunConfig::validate() const {
  synth.validate();
  thresholds.validate();
  experiment.train.validate();
  if (experiment.model.layers < 1 || experiment.model.hidden < 1 || experiment.model.readout_hidden < 1) {
    throw std::invalid_argument("layers, hidden and readout_hidden must be at least 1");
  }
  const auto& f = snapshot.fractions;
  if (!(f.train > 0.0 && f.validation > 0.0 && f.train + f.validation < 1.0)) {
    throw std::invalid_argument("train_fraction and val_fraction must be positive and sum below 1");
  }
  if (experiment.logistic.epochs < 0 || !(experiment.logistic.lr > 0.0) || experiment.logistic.l2 < 0.0) {
    throw std::invalid_argument("logistic settings out of range");
  }
  for (double s : sweep_fractions) {
    if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("sweep fractions must lie in (0, 1]");
  }
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument(where() + "expected key = value");
    std::string_view key = trim(line.substr(0, eq));
    std::string_view value = trim(line.substr(eq + 1));
    const Entry* entry = find_entry(key);
    if (!entry) throw std::invalid_argument(where() + "unknown key '" + std::string(key) + "'");
    if (!seen.emplace(key).second) {
      throw std::invalid_argument(where() + "key '" + std::string(key) + "' set twice");
    }
    try {
      entry->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where() + std::string(key) + ": " + e.what());
    }
  }
  sync_seed(config);
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(ingest::read_file(path));
}

void apply_env_overrides(RunConfig& config, const EnvLookup& lookup) {
  if (auto v = lookup("SIQ_SEED")) {
    try {
      config.seed = parse_number<std::uint64_t>(trim(*v));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string("SIQ_SEED: ") + e.what());
    }
  }
  if (auto v = lookup("SIQ_OUT")) config.out = *v;
  if (auto v = lookup("SIQ_EVENTS")) config.events_path = *v;
  if (auto v = lookup("SIQ_SCORES")) config.scores_path = *v;
  if (auto v = lookup("SIQ_QUESTIONS")) config.questions_path = *v;
  sync_seed(config);
}

void apply_env_overrides(RunConfig& config) {
  apply_env_overrides(config, [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v) return std::nullopt;
    return std::string(v);
  });
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& e : entries()) out.push_back(e.key);
  return out;
}

std::string to_text(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& e : entries()) out << e.key << " = " << e.get(config) << '\n';
  return out.str();
}

}  // namespace siq::config
