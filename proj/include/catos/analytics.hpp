#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "catos/util.hpp"

namespace catos::analytics {

/// Seconds of video represented by frame_count frames at fps.
double frames_to_seconds(std::int64_t frame_count, double fps);

/// recorded_s / observed_s. Throws when observed_s <= 0.
double duty_cycle(double recorded_s, double observed_s);

/// One-sided exact test: P[X >= k] for X ~ Binomial(n, p0).
double binomial_pvalue(std::int64_t n, std::int64_t k, double p0);

inline constexpr double kChance = 1.0 / 3.0;

struct ButtonStats {
  int n = 0;
  int n_correct = 0;
  std::optional<double> accuracy;  // absent when n == 0
  std::optional<double> p_value;

  bool operator==(const ButtonStats&) const = default;
};

struct SessionStats {
  std::string session_id;
  double observed_s = 0;
  double recorded_s = 0;
  double duty_cycle = 0;
  int n_trials = 0;
  int n_correct = 0;
  std::array<ButtonStats, 3> per_button;
  std::optional<double> overall_accuracy;
  std::optional<double> overall_p_value;

  bool operator==(const SessionStats&) const = default;
};

/// Accuracy and significance from a result CSV. Each trial counts toward the
/// button its stimulus maps to, timeouts included. The body is recounted and
/// checked against the summary line.
SessionStats trial_stats(std::string_view result_csv, const std::array<int, 3>& mapping = {0, 1, 2});

/// Full statistics for one archived session directory.
SessionStats session_stats(const fs::path& session_dir);

Json to_json(const SessionStats& s);
SessionStats session_stats_from_json(const Json& j);

/// Stats for each id under archive_root, ordered by session timestamp.
std::vector<SessionStats> performance_series(const fs::path& archive_root, std::span<const std::string> ids);

Json series_to_json(std::span<const SessionStats> series);
/// `session,overall_acc,b0_acc,b1_acc,b2_acc,overall_p`; absent values are
/// left empty.
std::string series_to_csv(std::span<const SessionStats> series);

}  // namespace catos::analytics
