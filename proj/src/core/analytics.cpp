#include "catos/analytics.hpp"

#include <algorithm>
#include <cmath>

#include "catos/archive.hpp"
#include "catos/error.hpp"
#include "catos/schema.hpp"

namespace catos::analytics {

double frames_to_seconds(std::int64_t frame_count, double fps) {
  if (!(fps > 0)) throw Error(ErrorKind::InvalidArgument, "fps must be positive");
  if (frame_count < 0) throw Error(ErrorKind::InvalidArgument, "frame count must be non-negative");
  return static_cast<double>(frame_count) / fps;
}

double duty_cycle(double recorded_s, double observed_s) {
  if (!(observed_s > 0)) throw Error(ErrorKind::InvalidArgument, "observed time must be positive");
  if (recorded_s < 0) throw Error(ErrorKind::InvalidArgument, "recorded time must be non-negative");
  return recorded_s / observed_s;
}

double binomial_pvalue(std::int64_t n, std::int64_t k, double p0) {
  if (n < 0 || k < 0 || k > n) throw Error(ErrorKind::InvalidArgument, "binomial test needs 0 <= k <= n");
  if (!(p0 > 0 && p0 < 1)) throw Error(ErrorKind::InvalidArgument, "binomial test needs 0 < p0 < 1");
  if (k == 0) return 1.0;
  const double lp = std::log(p0);
  const double lq = std::log1p(-p0);
  const double lgn = std::lgamma(static_cast<double>(n) + 1);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n - k + 1));
  for (std::int64_t i = k; i <= n; ++i) {
    const double x = static_cast<double>(i);
    terms.push_back(lgn - std::lgamma(x + 1) - std::lgamma(static_cast<double>(n - i) + 1) + x * lp +
                    static_cast<double>(n - i) * lq);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  double sum = 0;
  for (double t : terms) sum += std::exp(t - top);
  return std::min(1.0, std::exp(top + std::log(sum)));
}

namespace {

void fill_rates(ButtonStats& b) {
  if (b.n == 0) return;
  b.accuracy = static_cast<double>(b.n_correct) / b.n;
  b.p_value = binomial_pvalue(b.n, b.n_correct, kChance);
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> opt_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

SessionStats trial_stats(std::string_view result_csv, const std::array<int, 3>& mapping) {
  const schema::ResultFile file = schema::parse_result_csv(result_csv);
  if (!file.summary) throw Error(ErrorKind::Format, "result csv: missing summary line");
  const schema::SessionSummary recount = schema::summarize(file.rows);
  if (recount != *file.summary) {
    throw Error(ErrorKind::Format, "result csv: summary line (" + schema::format_summary_line(*file.summary) +
                                       ") disagrees with the rows (" + schema::format_summary_line(recount) + ")");
  }

  SessionStats s;
  for (const auto& r : file.rows) {
    const bool correct = r.response_button && *r.response_button == mapping[static_cast<std::size_t>(r.stimulus_id)];
    if (correct != r.correct) {
      throw Error(ErrorKind::Format, "result csv: trial " + std::to_string(r.trial_id) +
                                         " correct flag disagrees with the stimulus-to-button mapping");
    }
    ButtonStats& b = s.per_button[static_cast<std::size_t>(mapping[static_cast<std::size_t>(r.stimulus_id)])];
    ++b.n;
    ++s.n_trials;
    if (r.correct) {
      ++b.n_correct;
      ++s.n_correct;
    }
  }
  for (auto& b : s.per_button) fill_rates(b);
  if (s.n_trials > 0) {
    s.overall_accuracy = static_cast<double>(s.n_correct) / s.n_trials;
    s.overall_p_value = binomial_pvalue(s.n_trials, s.n_correct, kChance);
  }
  return s;
}

SessionStats session_stats(const fs::path& session_dir) {
  const archive::SessionIndex index = archive::read_index(session_dir);
  const archive::SessionInfo info = archive::read_session_info(session_dir / "results" / archive::kSessionFile);
  const fs::path results = session_dir / "results" / archive::kResultsFile;
  if (!fs::exists(results)) throw Error(ErrorKind::NotFound, "missing " + results.string());

  SessionStats s = trial_stats(read_file(results), info.stimulus_to_button);
  s.session_id = index.session_id;
  s.observed_s = static_cast<double>(index.observed_ms) / 1000.0 * index.cameras;
  for (const auto& c : index.clips) s.recorded_s += frames_to_seconds(c.frame_count, c.fps);
  s.duty_cycle = s.observed_s > 0 ? duty_cycle(s.recorded_s, s.observed_s) : 0.0;
  return s;
}

Json to_json(const SessionStats& s) {
  Json buttons = Json::array();
  for (const auto& b : s.per_button) {
    buttons.push_back({{"n", b.n}, {"n_correct", b.n_correct}, {"accuracy", opt(b.accuracy)}, {"p_value", opt(b.p_value)}});
  }
  return Json{
      {"session_id", s.session_id},
      {"observed_s", s.observed_s},
      {"recorded_s", s.recorded_s},
      {"duty_cycle", s.duty_cycle},
      {"n_trials", s.n_trials},
      {"n_correct", s.n_correct},
      {"per_button", buttons},
      {"overall_accuracy", opt(s.overall_accuracy)},
      {"overall_p_value", opt(s.overall_p_value)},
  };
}

SessionStats session_stats_from_json(const Json& j) {
  SessionStats s;
  try {
    j.at("session_id").get_to(s.session_id);
    j.at("observed_s").get_to(s.observed_s);
    j.at("recorded_s").get_to(s.recorded_s);
    j.at("duty_cycle").get_to(s.duty_cycle);
    j.at("n_trials").get_to(s.n_trials);
    j.at("n_correct").get_to(s.n_correct);
    const Json& buttons = j.at("per_button");
    if (buttons.size() != 3) throw Error(ErrorKind::Format, "session stats: per_button needs 3 entries");
    for (std::size_t i = 0; i < 3; ++i) {
      buttons[i].at("n").get_to(s.per_button[i].n);
      buttons[i].at("n_correct").get_to(s.per_button[i].n_correct);
      s.per_button[i].accuracy = opt_from(buttons[i].at("accuracy"));
      s.per_button[i].p_value = opt_from(buttons[i].at("p_value"));
    }
    s.overall_accuracy = opt_from(j.at("overall_accuracy"));
    s.overall_p_value = opt_from(j.at("overall_p_value"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("session stats: ") + e.what());
  }
  return s;
}

std::vector<SessionStats> performance_series(const fs::path& archive_root, std::span<const std::string> ids) {
  std::vector<std::string> sorted(ids.begin(), ids.end());
  for (const auto& id : sorted) {
    if (!archive::is_session_id(id) || !fs::exists(archive_root / id / archive::kIndexFile)) {
      throw Error(ErrorKind::NotFound, "unknown session " + id);
    }
  }
  // Ids are timestamps, so lexicographic order is chronological.
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<SessionStats> series;
  for (const auto& id : sorted) series.push_back(session_stats(archive_root / id));
  return series;
}

Json series_to_json(std::span<const SessionStats> series) {
  Json out = Json::array();
  for (const auto& s : series) out.push_back(to_json(s));
  return out;
}

std::string series_to_csv(std::span<const SessionStats> series) {
  auto cell = [](const std::optional<double>& v, int decimals) {
    return v ? format_fixed(*v, decimals) : std::string();
  };
  std::string out = "session,overall_acc,b0_acc,b1_acc,b2_acc,overall_p\n";
  for (const auto& s : series) {
    out += s.session_id + "," + cell(s.overall_accuracy, 4);
    for (const auto& b : s.per_button) out += "," + cell(b.accuracy, 4);
    char p[32] = "";
    if (s.overall_p_value) std::snprintf(p, sizeof p, "%.6g", *s.overall_p_value);
    out += "," + std::string(p) + "\n";
  }
  return out;
}

}  // namespace catos::analytics
