// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace loopport::cli {

enum Exit { Ok = 0, Failure = 1, ScheduleDependent = 2, NotConverged = 3 };

/// translate | run | solve | report. Artifacts go to files or `out`,
/// diagnostics to `err`. Returns the process exit status.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace loopport::cli
