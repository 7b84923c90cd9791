#pragma once
// Interval and calendar features. Intervals are log-bucketed on a minutes
// scale; calendar fields come from the proleptic Gregorian UTC calendar.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ufrec {

struct CalendarParts {
  int year = 1970;
  int month = 1;    // 1..12
  int day = 1;      // 1..31
  int weekday = 4;  // 0=Sunday .. 6=Saturday
};

inline CalendarParts calendar_of(std::int64_t ts) {
  using namespace std::chrono;
  std::int64_t d = ts / 86400;
  if (ts < 0 && ts % 86400 != 0) --d;
  const sys_days sd{days{d}};
  const year_month_day ymd{sd};
  const weekday wd{sd};
  CalendarParts out;
  out.year = static_cast<int>(ymd.year());
  out.month = static_cast<int>(static_cast<unsigned>(ymd.month()));
  out.day = static_cast<int>(static_cast<unsigned>(ymd.day()));
  out.weekday = static_cast<int>(wd.c_encoding());
  return out;
}

// bucket = min(B-1, floor(log2(1 + tau/60))), tau in seconds.
inline int interval_bucket(std::int64_t tau_seconds, int num_buckets) {
  if (tau_seconds < 0) throw std::runtime_error("interval_bucket: negative interval");
  const double b = std::floor(std::log2(1.0 + static_cast<double>(tau_seconds) / 60.0));
  const int bi = static_cast<int>(b);
  return std::min(num_buckets - 1, std::max(0, bi));
}

struct TimeFeatures {
  std::vector<std::int64_t> intervals;  // tau_1..tau_{n-1}
  std::vector<int> buckets;             // same length as intervals
  std::vector<CalendarParts> calendar;  // one per timestamp
};

inline TimeFeatures compute_time_features(const std::vector<std::int64_t>& timestamps,
                                          int num_buckets) {
  TimeFeatures out;
  for (size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] < timestamps[i - 1])
      throw std::runtime_error("compute_time_features: timestamps decrease at position " +
                               std::to_string(i));
    const std::int64_t tau = timestamps[i] - timestamps[i - 1];
    out.intervals.push_back(tau);
    out.buckets.push_back(interval_bucket(tau, num_buckets));
  }
  out.calendar.reserve(timestamps.size());
  for (std::int64_t t : timestamps) out.calendar.push_back(calendar_of(t));
  return out;
}

// Padded-sequence variants used by the encoder. A slot gets a real bucket id
// only when both it and its predecessor are valid; the sentinel -1 marks
// slots that must embed to the zero vector (padding and the first valid
// position, which has no preceding interval).
inline std::vector<int> padded_interval_ids(const std::vector<std::int64_t>& timestamps,
                                            const std::vector<std::uint8_t>& mask,
                                            int num_buckets) {
  std::vector<int> ids(timestamps.size(), -1);
  for (size_t i = 1; i < timestamps.size(); ++i) {
    if (!mask[i] || !mask[i - 1]) continue;
    ids[i] = interval_bucket(timestamps[i] - timestamps[i - 1], num_buckets);
  }
  return ids;
}

struct CalendarIds {
  std::vector<int> year, month, day, weekday;  // -1 at padded slots
};

inline CalendarIds padded_calendar_ids(const std::vector<std::int64_t>& timestamps,
                                       const std::vector<std::uint8_t>& mask, int base_year,
                                       int num_years) {
  CalendarIds out;
  const size_t n = timestamps.size();
  out.year.assign(n, -1);
  out.month.assign(n, -1);
  out.day.assign(n, -1);
  out.weekday.assign(n, -1);
  for (size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const CalendarParts c = calendar_of(timestamps[i]);
    out.year[i] = std::min(num_years - 1, std::max(0, c.year - base_year));
    out.month[i] = c.month - 1;
    out.day[i] = c.day - 1;
    out.weekday[i] = c.weekday;
  }
  return out;
}

}  // namespace ufrec
