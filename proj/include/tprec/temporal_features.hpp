#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace tprec {

inline constexpr std::int64_t kSecondsPerDay = 86400;

/// Seconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t seconds = 0;

  /// Day index (days since 1970-01-01); features are resolved per day.
  std::int64_t day() const;
};

enum class Season : int { Winter = 1, Spring = 2, Summer = 3, Autumn = 4 };

/// Meteorological season of a month (1..12).
Season season_of_month(unsigned month);

struct CalendarContext {
  int earliest_year = 1970;
  std::int64_t earliest_day = 0;

  static CalendarContext from_timestamps(std::span<const Timestamp> ts);
};

/// z(i): number of interactions per day starting at origin_day.
struct DailyCountSeries {
  std::int64_t origin_day = 0;
  std::vector<double> counts;

  static DailyCountSeries from_timestamps(std::span<const Timestamp> ts);
  std::int64_t last_day() const { return origin_day + static_cast<std::int64_t>(counts.size()) - 1; }
};

inline constexpr std::size_t kStatDims = 16;
inline constexpr std::size_t kStructDims = 9;
inline constexpr std::size_t kFeatureDims = kStatDims + kStructDims;
inline constexpr std::array<int, 4> kTrendGaps = {90, 30, 7, 1};

// Layout of the statistical block.
inline constexpr std::size_t kYearSlot = 0;
inline constexpr std::size_t kDaySlot = 1;
inline constexpr std::size_t kMonthSlot = 2;
inline constexpr std::size_t kWeekdayBase = 3;  // 8 slots, ISO weekday 1..7, slot 0 unused
inline constexpr std::size_t kSeasonBase = 11;  // 5 slots, Season 1..4, slot 0 unused

struct TemporalFeature {
  std::array<double, kFeatureDims> combined{};

  std::span<const double> stat() const { return {combined.data(), kStatDims}; }
  std::span<const double> stru() const { return {combined.data() + kStatDims, kStructDims}; }
};

std::array<double, kStatDims> stat_features(Timestamp t, const CalendarContext& ctx);

/// First-order trend z'_gap at day t. Current window is (t-gap, t], the past
/// window is (t-2gap, t-gap]. Days lacking 2*gap of history take the value of
/// the nearest day that has it; days past the end of the series take the
/// value of the last day.
double first_order_trend(const DailyCountSeries& series, Timestamp t, int gap);

/// Second-order trend z''_gap: the same window difference applied to z'_gap.
double second_order_trend(const DailyCountSeries& series, Timestamp t, int gap);

std::array<double, kStructDims> struct_features(const DailyCountSeries& series, Timestamp t);

TemporalFeature temporal_feature(Timestamp t, const CalendarContext& ctx, const DailyCountSeries& series);

/// Precomputed z, z'_gap and z''_gap for every day of a series. Featurizing
/// many timestamps against one series goes through this table.
class TrendTable {
 public:
  explicit TrendTable(const DailyCountSeries& series);

  double count(std::int64_t day) const;
  double first(std::int64_t day, int gap) const;
  double second(std::int64_t day, int gap) const;
  std::array<double, kStructDims> struct_features(std::int64_t day) const;

 private:
  std::size_t gap_slot(int gap) const;
  std::size_t clamp_index(std::int64_t day) const;

  DailyCountSeries series_;
  // Per gap: padded first/second-order values indexed like counts.
  std::array<std::vector<double>, kTrendGaps.size()> first_;
  std::array<std::vector<double>, kTrendGaps.size()> second_;
};

TemporalFeature temporal_feature(Timestamp t, const CalendarContext& ctx, const TrendTable& trends);

}  // namespace tprec
