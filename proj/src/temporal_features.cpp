#include "tprec/temporal_features.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <stdexcept>
#include <string>

namespace tprec {

namespace {

using std::chrono::days;
using std::chrono::sys_days;
using std::chrono::weekday;
using std::chrono::year_month_day;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

year_month_day civil(std::int64_t day) { return year_month_day{sys_days{days{day}}}; }

void require_gap(int gap) {
  if (gap < 1) throw std::invalid_argument("trend gap must be >= 1, got " + std::to_string(gap));
}

double window_sum(const std::vector<double>& v, std::int64_t lo, std::int64_t hi) {
  // Sum over (lo, hi].
  double s = 0.0;
  for (std::int64_t i = lo + 1; i <= hi; ++i) s += v[static_cast<std::size_t>(i)];
  return s;
}

// Window difference of `values` for every index. `valid_from` is the first
// index holding a genuine value; indices before valid_from + 2*gap - 1 lack a
// full history and copy the nearest computable index. With no computable
// index at all the result is zero everywhere.
std::vector<double> padded_trend(const std::vector<double>& values, std::int64_t valid_from, int gap) {
  const auto n = static_cast<std::int64_t>(values.size());
  std::vector<double> out(values.size(), 0.0);
  const std::int64_t start = valid_from + 2 * static_cast<std::int64_t>(gap) - 1;
  if (start >= n) return out;
  const double g = static_cast<double>(gap);
  for (std::int64_t i = start; i < n; ++i) {
    const double current = window_sum(values, i - gap, i);
    const double past = window_sum(values, i - 2 * gap, i - gap);
    out[static_cast<std::size_t>(i)] = (current - past) / g;
  }
  std::fill(out.begin(), out.begin() + start, out[static_cast<std::size_t>(start)]);
  return out;
}

std::size_t clamp_to_series(const DailyCountSeries& series, std::int64_t day) {
  const std::int64_t idx = std::clamp<std::int64_t>(day - series.origin_day, 0,
                                                    static_cast<std::int64_t>(series.counts.size()) - 1);
  return static_cast<std::size_t>(idx);
}

void require_series(const DailyCountSeries& series) {
  if (series.counts.empty()) throw std::invalid_argument("daily count series is empty");
}

}  // namespace

std::int64_t Timestamp::day() const { return floor_div(seconds, kSecondsPerDay); }

Season season_of_month(unsigned month) {
  if (month < 1 || month > 12) throw std::invalid_argument("month out of range: " + std::to_string(month));
  if (month == 12 || month <= 2) return Season::Winter;
  if (month <= 5) return Season::Spring;
  if (month <= 8) return Season::Summer;
  return Season::Autumn;
}

CalendarContext CalendarContext::from_timestamps(std::span<const Timestamp> ts) {
  if (ts.empty()) throw std::invalid_argument("cannot derive calendar context from an empty log");
  std::int64_t earliest = std::numeric_limits<std::int64_t>::max();
  for (const auto& t : ts) earliest = std::min(earliest, t.day());
  CalendarContext ctx;
  ctx.earliest_day = earliest;
  ctx.earliest_year = static_cast<int>(civil(earliest).year());
  return ctx;
}

DailyCountSeries DailyCountSeries::from_timestamps(std::span<const Timestamp> ts) {
  if (ts.empty()) throw std::invalid_argument("cannot build a count series from an empty log");
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& t : ts) {
    lo = std::min(lo, t.day());
    hi = std::max(hi, t.day());
  }
  DailyCountSeries s;
  s.origin_day = lo;
  s.counts.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
  for (const auto& t : ts) s.counts[static_cast<std::size_t>(t.day() - lo)] += 1.0;
  return s;
}

std::array<double, kStatDims> stat_features(Timestamp t, const CalendarContext& ctx) {
  const std::int64_t day = t.day();
  if (day < ctx.earliest_day) {
    throw std::invalid_argument("timestamp day " + std::to_string(day) + " precedes earliest day " +
                                std::to_string(ctx.earliest_day));
  }
  const year_month_day ymd = civil(day);
  const unsigned month = static_cast<unsigned>(ymd.month());
  const unsigned iso_weekday = weekday{sys_days{days{day}}}.iso_encoding();

  std::array<double, kStatDims> f{};
  f[kYearSlot] = static_cast<double>(static_cast<int>(ymd.year()) - ctx.earliest_year);
  f[kDaySlot] = static_cast<double>(day - ctx.earliest_day);
  f[kMonthSlot] = static_cast<double>(month);
  f[kWeekdayBase + iso_weekday] = 1.0;
  f[kSeasonBase + static_cast<std::size_t>(season_of_month(month))] = 1.0;
  return f;
}

double first_order_trend(const DailyCountSeries& series, Timestamp t, int gap) {
  require_series(series);
  require_gap(gap);
  return padded_trend(series.counts, 0, gap)[clamp_to_series(series, t.day())];
}

double second_order_trend(const DailyCountSeries& series, Timestamp t, int gap) {
  require_series(series);
  require_gap(gap);
  const auto first = padded_trend(series.counts, 0, gap);
  return padded_trend(first, 2 * static_cast<std::int64_t>(gap) - 1, gap)[clamp_to_series(series, t.day())];
}

std::array<double, kStructDims> struct_features(const DailyCountSeries& series, Timestamp t) {
  return TrendTable(series).struct_features(t.day());
}

TemporalFeature temporal_feature(Timestamp t, const CalendarContext& ctx, const DailyCountSeries& series) {
  return temporal_feature(t, ctx, TrendTable(series));
}

TemporalFeature temporal_feature(Timestamp t, const CalendarContext& ctx, const TrendTable& trends) {
  TemporalFeature out;
  const auto stat = stat_features(t, ctx);
  const auto stru = trends.struct_features(t.day());
  std::copy(stat.begin(), stat.end(), out.combined.begin());
  std::copy(stru.begin(), stru.end(), out.combined.begin() + kStatDims);
  return out;
}

TrendTable::TrendTable(const DailyCountSeries& series) : series_(series) {
  require_series(series_);
  for (std::size_t g = 0; g < kTrendGaps.size(); ++g) {
    const int gap = kTrendGaps[g];
    first_[g] = padded_trend(series_.counts, 0, gap);
    second_[g] = padded_trend(first_[g], 2 * static_cast<std::int64_t>(gap) - 1, gap);
  }
}

std::size_t TrendTable::gap_slot(int gap) const {
  for (std::size_t g = 0; g < kTrendGaps.size(); ++g)
    if (kTrendGaps[g] == gap) return g;
  throw std::invalid_argument("gap " + std::to_string(gap) + " is not precomputed");
}

std::size_t TrendTable::clamp_index(std::int64_t day) const { return clamp_to_series(series_, day); }

double TrendTable::count(std::int64_t day) const { return series_.counts[clamp_index(day)]; }

double TrendTable::first(std::int64_t day, int gap) const { return first_[gap_slot(gap)][clamp_index(day)]; }

double TrendTable::second(std::int64_t day, int gap) const { return second_[gap_slot(gap)][clamp_index(day)]; }

std::array<double, kStructDims> TrendTable::struct_features(std::int64_t day) const {
  std::array<double, kStructDims> f{};
  const std::size_t i = clamp_index(day);
  f[0] = series_.counts[i];
  for (std::size_t g = 0; g < kTrendGaps.size(); ++g) {
    f[1 + 2 * g] = first_[g][i];
    f[2 + 2 * g] = second_[g][i];
  }
  return f;
}

}  // namespace tprec
