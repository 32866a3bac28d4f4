#include "walklab/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace walklab {

namespace {

std::mutex sink_mutex;

WarningSink& current_sink() {
  static WarningSink sink = [](std::string_view m) { std::cerr << "warning: " << m << '\n'; };
  return sink;
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex);
  return std::exchange(current_sink(), std::move(sink));
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex);
  if (current_sink()) current_sink()(message);
}

}  // namespace walklab
