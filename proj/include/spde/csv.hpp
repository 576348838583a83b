#pragma once

// CSV / manifest emission. All numbers print through the same %.17g format so
// reruns and different worker counts produce byte-identical files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spde/errors.hpp"

namespace spde {

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& header) : out_(path) {
        if (!out_) throw validation_error("cannot open output file " + path.string());
        out_ << header << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

} // namespace spde
