// Copyright 2026 CCOP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CCOP_CLI_HPP_
#define CCOP_CLI_HPP_

#include <string>
#include <vector>

namespace ccop {

/// Dispatches one CLI invocation (args exclude the program name).
/// Exit codes: 0 success, 1 usage error, 2 runtime failure.
int cli_run(const std::vector<std::string>& args);

}  // namespace ccop

#endif  // CCOP_CLI_HPP_
