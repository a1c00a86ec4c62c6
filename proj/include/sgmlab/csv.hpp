#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace sgm {

/// Shortest round-trip decimal form; identical bits give identical text.
std::string format_double(double v);

/// 64-bit FNV-1a of a string, as 16 hex digits. Used for provenance tags.
std::string fingerprint(std::string_view text);

/// Minimal CSV writer: a header row, then rows of already-formatted cells.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    CsvWriter& cell(double v);
    CsvWriter& cell(std::uint64_t v);
    CsvWriter& cell(std::string_view v);
    void end_row();

    const std::filesystem::path& path() const { return path_; }

private:
    void separator();

    std::filesystem::path path_;
    std::ofstream out_;
    bool row_started_ = false;
};

}  // namespace sgm
