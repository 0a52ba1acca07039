#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace revdeq {

// Shortest decimal string that round-trips the double (std::to_chars), so
// identical runs serialize byte-identically.
std::string format_double(double v);

// Comma-separated table with a header row; fields containing commas, quotes
// or newlines are quoted per RFC 4180.
class Csv {
public:
    explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::vector<std::string> cells);
    std::size_t num_rows() const { return rows_.size(); }
    std::string to_string() const;

    // Write via temp file + rename in the target directory.
    void write_atomic(const std::filesystem::path& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace revdeq
