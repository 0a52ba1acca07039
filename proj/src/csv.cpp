#include "revdeq/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <system_error>

#include "revdeq/errors.hpp"

namespace revdeq {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

bool needs_quoting(const std::string& s) {
    return s.find_first_of(",\"\n\r") != std::string::npos;
}

std::string escape_field(const std::string& s) {
    if (!needs_quoting(s)) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

void append_line(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += escape_field(cells[i]);
    }
    out += '\n';
}

}  // namespace

void Csv::add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) {
        throw io_error("csv row has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(header_.size()));
    }
    rows_.push_back(std::move(cells));
}

std::string Csv::to_string() const {
    std::string out;
    append_line(out, header_);
    for (const auto& row : rows_) append_line(out, row);
    return out;
}

void Csv::write_atomic(const std::filesystem::path& path) const {
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (!dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw io_error("cannot open " + tmp.string() + " for writing");
        std::string body = to_string();
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw io_error("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw io_error("rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace revdeq
