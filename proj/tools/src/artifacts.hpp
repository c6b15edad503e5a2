#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvlab::cli {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

/// Raised by Assertions in strict mode to stop the subcommand at the first failure.
struct StrictStop : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AssertionRecord {
    std::string name;
    bool passed = false;
    std::string detail;
};

class Assertions {
public:
    explicit Assertions(bool strict) : strict_(strict) {}

    /// Records a check; in strict mode a failure throws StrictStop.
    void check(const std::string& name, bool passed, const std::string& detail);
    /// Recorded as such normally, and as a failed assertion in strict mode.
    void warn(const std::string& message);

    const std::vector<AssertionRecord>& records() const noexcept { return records_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    bool all_passed() const;

private:
    bool strict_;
    std::vector<AssertionRecord> records_;
    std::vector<std::string> warnings_;
};

/// Writes the files of one run into a directory and remembers their hashes for the manifest.
/// Every writer goes through a string buffer in the classic locale, so the bytes do not depend
/// on the environment.
class ArtifactWriter {
public:
    explicit ArtifactWriter(std::filesystem::path dir);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    void write(const std::string& name, const std::function<void(std::ostream&)>& body);
    void write_text(const std::string& name, const std::string& content);

    struct Entry {
        std::string name;
        std::string sha256;
        std::size_t bytes = 0;
    };
    const std::vector<Entry>& entries() const noexcept { return entries_; }

private:
    std::filesystem::path dir_;
    std::vector<Entry> entries_;
};

}  // namespace mvlab::cli
