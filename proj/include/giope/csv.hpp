#pragma once
#include <fstream>
#include <string>
#include <vector>

#include "giope/errors.hpp"
#include "giope/format.hpp"

namespace giope {

/// Minimal RFC-4180 writer: CRLF rows, quoting only where required, doubles
/// in shortest round-trip form.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw ParseError("cannot open '" + path + "' for writing");
    }

    CsvWriter& cell(const std::string& v) {
        sep();
        out_ << quote(v);
        return *this;
    }
    CsvWriter& cell(double v) {
        sep();
        out_ << format_double(v);
        return *this;
    }
    CsvWriter& cell(std::size_t v) {
        sep();
        out_ << v;
        return *this;
    }
    CsvWriter& cell(int v) {
        sep();
        out_ << v;
        return *this;
    }

    void end_row() {
        out_ << "\r\n";
        first_ = true;
    }

    void row(const std::vector<std::string>& cells) {
        for (const auto& c : cells) cell(c);
        end_row();
    }

private:
    void sep() {
        if (!first_) out_ << ',';
        first_ = false;
    }
    static std::string quote(const std::string& v) {
        if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
        std::string q = "\"";
        for (char ch : v) {
            if (ch == '"') q += '"';
            q += ch;
        }
        q += '"';
        return q;
    }

    std::ofstream out_;
    bool first_ = true;
};

} // namespace giope
