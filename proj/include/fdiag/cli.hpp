#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdiag::cli {

/// Bad flags, unknown keys, unparsable values. Maps to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Resolved key/value settings for one run.
///
/// Every known key has a default; values come from the defaults, then the config
/// file, then `key=value` arguments, then dedicated flags.
class RunConfig {
public:
    RunConfig();

    /// Rejects keys outside the known set.
    void set(const std::string& key, const std::string& value);
    /// Reads `key = value` lines; `#` starts a comment.
    void load_file(const std::string& path);

    const std::string& str(const std::string& key) const;
    double real(const std::string& key) const;
    std::size_t count(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool flag(const std::string& key) const;
    bool is_set(const std::string& key) const { return explicit_.count(key) != 0; }
    bool empty(const std::string& key) const { return str(key).empty(); }

    /// Sorted `key = value` lines for every key except the output directory.
    std::string meta(const std::string& command) const;

    static const std::map<std::string, std::string>& defaults();

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

const std::vector<std::string>& commands();

/// Full command-line entry point: parses argv, runs the command, prints a single
/// diagnostic line on failure. Returns 0, 1 (usage) or 2 (runtime).
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Runs an already-resolved command; throws on failure.
void run(const std::string& command, RunConfig& config, std::ostream& out);

}  // namespace fdiag::cli
