#ifndef WALKLAB_LOG_HPP
#define WALKLAB_LOG_HPP

#include <functional>
#include <string_view>

namespace walklab {

using WarningSink = std::function<void(std::string_view)>;

/// Replaces the warning sink and returns the previous one. The default writes
/// one line to stderr. A null sink silences warnings.
WarningSink set_warning_sink(WarningSink sink);

void warn(std::string_view message);

}  // namespace walklab

#endif  // WALKLAB_LOG_HPP
