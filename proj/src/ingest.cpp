#include "siq/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace siq::ingest {

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find(',', start);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  return fields;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t'; });
}

template <typename Int>
std::optional<Int> parse_int(std::string_view field) {
  Int value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) return std::nullopt;
  return value;
}

// Returns the data lines after validating the header; an empty text or a
// missing header is fatal.
std::vector<std::string_view> csv_body(std::string_view text, std::string_view header) {
  auto lines = split_lines(text);
  if (lines.empty() || lines.front() != header) {
    throw std::runtime_error("expected CSV header '" + std::string(header) + "'");
  }
  lines.erase(lines.begin());
  return lines;
}

}  // namespace

std::optional<EventType> parse_event_type(std::string_view name) {
  if (name == "mousedown") return EventType::MouseDown;
  if (name == "mouseup") return EventType::MouseUp;
  if (name == "mousemove") return EventType::MouseMove;
  return std::nullopt;
}

std::string_view to_string(EventType type) {
  switch (type) {
    case EventType::MouseDown: return "mousedown";
    case EventType::MouseUp: return "mouseup";
    case EventType::MouseMove: return "mousemove";
  }
  return "mousemove";
}

ScoreLevel::ScoreLevel(int level) : level_(level) {
  if (level < 0 || level >= kCount) {
    throw std::out_of_range("score level " + std::to_string(level) + " outside 0..3");
  }
}

void ScoreThresholds::validate() const {
  if (bounds.size() != ScoreLevel::kCount - 1) {
    throw std::invalid_argument("score thresholds need exactly 3 bounds");
  }
  int previous = 0;
  for (int bound : bounds) {
    if (bound <= previous || bound > 100) {
      throw std::invalid_argument("score thresholds must increase strictly within 1..100");
    }
    previous = bound;
  }
}

ScoreLevel map_score_level(int raw_score, const ScoreThresholds& thresholds) {
  if (raw_score < 0 || raw_score > 100) {
    throw std::out_of_range("raw score " + std::to_string(raw_score) + " outside 0..100");
  }
  int level = 0;
  for (int bound : thresholds.bounds) {
    if (raw_score >= bound) ++level;
  }
  return ScoreLevel(level);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

std::vector<Trajectory> group_events(std::vector<MouseEvent> events) {
  std::map<std::pair<std::string, std::string>, Trajectory> grouped;
  for (auto& event : events) {
    auto key = std::make_pair(event.student_id, event.question_id);
    auto [it, inserted] = grouped.try_emplace(key);
    if (inserted) {
      it->second.student_id = event.student_id;
      it->second.question_id = event.question_id;
    }
    it->second.events.push_back(std::move(event));
  }
  std::vector<Trajectory> out;
  out.reserve(grouped.size());
  for (auto& [key, trajectory] : grouped) {
    std::stable_sort(trajectory.events.begin(), trajectory.events.end(),
                     [](const MouseEvent& a, const MouseEvent& b) { return a.t_ms < b.t_ms; });
    out.push_back(std::move(trajectory));
  }
  return out;
}

LoadResult<Trajectory> parse_events(std::string_view text) {
  std::vector<MouseEvent> events;
  std::size_t discarded = 0;
  for (std::string_view line : split_lines(text)) {
    if (is_blank(line)) continue;
    auto doc = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (!doc.is_object()) {
      ++discarded;
      continue;
    }
    auto field = [&](const char* key) -> const nlohmann::json* {
      auto it = doc.find(key);
      return it == doc.end() ? nullptr : &*it;
    };
    const auto* student = field("student_id");
    const auto* question = field("question_id");
    const auto* type = field("event_type");
    const auto* t = field("t_ms");
    const auto* x = field("x");
    const auto* y = field("y");
    if (!student || !question || !type || !t || !x || !y || !student->is_string() ||
        !question->is_string() || !type->is_string() || !t->is_number_integer() ||
        !x->is_number() || !y->is_number()) {
      ++discarded;
      continue;
    }
    auto event_type = parse_event_type(type->get<std::string>());
    std::int64_t t_ms = t->get<std::int64_t>();
    if (!event_type || t_ms < 0) {
      ++discarded;
      continue;
    }
    events.push_back(MouseEvent{student->get<std::string>(), question->get<std::string>(),
                                *event_type, t_ms, x->get<double>(), y->get<double>()});
  }
  return {group_events(std::move(events)), discarded};
}

LoadResult<Trajectory> load_events(const std::filesystem::path& path) {
  return parse_events(read_file(path));
}

void assign_trial_indices(std::vector<ScoreRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_pair;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_pair[{records[i].student_id, records[i].question_id}].push_back(i);
  }
  for (auto& [key, indices] : by_pair) {
    std::stable_sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      return records[a].timestamp_ms < records[b].timestamp_ms;
    });
    for (std::size_t rank = 0; rank < indices.size(); ++rank) {
      records[indices[rank]].trial_index = static_cast<int>(rank) + 1;
    }
  }
}

LoadResult<ScoreRecord> parse_scores(std::string_view text) {
  LoadResult<ScoreRecord> result;
  for (std::string_view line : csv_body(text, "student_id,question_id,raw_score,timestamp_ms")) {
    if (is_blank(line)) continue;
    auto fields = split_fields(line);
    if (fields.size() != 4 || fields[0].empty() || fields[1].empty()) {
      ++result.discarded;
      continue;
    }
    auto score = parse_int<int>(fields[2]);
    auto timestamp = parse_int<std::int64_t>(fields[3]);
    if (!score || !timestamp || *score < 0 || *score > 100 || *timestamp < 0) {
      ++result.discarded;
      continue;
    }
    result.items.push_back(
        ScoreRecord{std::string(fields[0]), std::string(fields[1]), *score, *timestamp, 1});
  }
  assign_trial_indices(result.items);
  return result;
}

LoadResult<ScoreRecord> load_scores(const std::filesystem::path& path) {
  return parse_scores(read_file(path));
}

LoadResult<QuestionMeta> parse_questions(std::string_view text,
                                         std::span<const std::string> vocabulary) {
  LoadResult<QuestionMeta> result;
  for (std::string_view line : csv_body(text, "question_id,grade,difficulty,math_dimension")) {
    if (is_blank(line)) continue;
    auto fields = split_fields(line);
    if (fields.size() != 4 || fields[0].empty() || fields[3].empty()) {
      ++result.discarded;
      continue;
    }
    auto grade = parse_int<int>(fields[1]);
    auto difficulty = parse_int<int>(fields[2]);
    if (!grade || !difficulty || *grade < 0 || *grade > 12 || *difficulty < 1 ||
        *difficulty > 5) {
      ++result.discarded;
      continue;
    }
    std::string dimension(fields[3]);
    if (!vocabulary.empty() &&
        std::find(vocabulary.begin(), vocabulary.end(), dimension) == vocabulary.end()) {
      ++result.discarded;
      continue;
    }
    result.items.push_back(
        QuestionMeta{std::string(fields[0]), *grade, *difficulty, std::move(dimension)});
  }
  return result;
}

LoadResult<QuestionMeta> load_questions(const std::filesystem::path& path,
                                        std::span<const std::string> vocabulary) {
  return parse_questions(read_file(path), vocabulary);
}

std::vector<ScoreRecord> first_trials(std::span<const ScoreRecord> records) {
  std::vector<ScoreRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [](const ScoreRecord& r) { return r.trial_index == 1; });
  return out;
}

}  // namespace siq::ingest
