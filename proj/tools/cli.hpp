#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qa::cli {

using Getenv = std::function<std::optional<std::string>(const std::string&)>;

/// Runs one `qa` invocation. `args` excludes the program name. Data goes to
/// `out`, diagnostics and structured error lines to `err`.
///
/// Exit status: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Getenv& getenv);

Getenv process_environment();

/// Comma-separated sizes ("20k", "1.5m" accepted). `a,b,...,z` continues
/// with step b - a up to z; when that step cannot land on z but b divides
/// z, the step is b (so `1,50,...,500` is 1, 50, 100, ..., 500).
std::vector<std::size_t> parse_size_list(std::string_view text);

}  // namespace qa::cli
