// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <string_view>

#include "ptsc/config.hpp"

PTSC_BEGIN_NAMESPACE

using WarningSink = std::function<void(std::string_view)>;

/// Non-fatal diagnostics go through a process-wide sink (stderr by default).
void warn(std::string_view message);
/// Returns the previous sink. Passing an empty function restores stderr.
WarningSink set_warning_sink(WarningSink sink);

PTSC_END_NAMESPACE
