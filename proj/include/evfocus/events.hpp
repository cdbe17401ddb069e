#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace evfocus {

/// One asynchronous brightness-change sample. Coordinates are floating point:
/// dataset files carry integer pixels, the synthetic generator is sub-pixel.
struct Event {
  double t = 0.0;  // seconds
  double x = 0.0;
  double y = 0.0;
  std::int8_t polarity = 1;  // +1 or -1
};

enum class TRefPolicy { Midpoint, First, Last };

/// Events of one processing window plus the reference time the warps flatten at.
struct EventWindow {
  std::vector<Event> events;
  double t_ref = 0.0;

  double t_begin() const { return events.empty() ? 0.0 : events.front().t; }
  double t_end() const { return events.empty() ? 0.0 : events.back().t; }
  size_t size() const { return events.size(); }
};

inline double reference_time(double t_first, double t_last, TRefPolicy policy) {
  switch (policy) {
    case TRefPolicy::First: return t_first;
    case TRefPolicy::Last: return t_last;
    case TRefPolicy::Midpoint: break;
  }
  return 0.5 * (t_first + t_last);
}

inline EventWindow make_window(std::vector<Event> events, TRefPolicy policy = TRefPolicy::Midpoint) {
  EventWindow w;
  w.t_ref = events.empty() ? 0.0 : reference_time(events.front().t, events.back().t, policy);
  w.events = std::move(events);
  return w;
}

/// Windows of exactly n consecutive events starting at 0, stride, 2*stride, ...
/// A trailing partial window is dropped.
inline std::vector<EventWindow> slice_by_count(const std::vector<Event>& stream, size_t n,
                                               size_t stride,
                                               TRefPolicy policy = TRefPolicy::Midpoint) {
  if (n < 1 || stride < 1) throw std::invalid_argument("slice_by_count: n and stride must be >= 1");
  std::vector<EventWindow> out;
  for (size_t start = 0; start + n <= stream.size(); start += stride) {
    EventWindow w;
    w.events.assign(stream.begin() + start, stream.begin() + start + n);
    w.t_ref = reference_time(w.events.front().t, w.events.back().t, policy);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace evfocus
