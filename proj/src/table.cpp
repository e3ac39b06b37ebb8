#include "ecofair/table.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "ecofair/error.hpp"

namespace ecofair {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

template <typename T>
T parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    T value{};
    const char* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    ECOFAIR_REQUIRE(ec == std::errc() && ptr == end, ErrorCode::ParseFailure,
                    "row " + std::to_string(row) + ", column " + column + ": '" + cell + "'");
    return value;
}

}  // namespace

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

PredictionTable::PredictionTable(std::size_t lenders) : lenders_(lenders) {
    ECOFAIR_REQUIRE(lenders >= 1, ErrorCode::InvalidArgument, "table needs at least one lender");
}

void PredictionTable::reserve(std::size_t rows) {
    ids_.reserve(rows);
    groups_.reserve(rows);
    labels_.reserve(rows);
    served_.reserve(rows * lenders_);
    probs_.reserve(rows * lenders_);
}

void PredictionTable::add_row(std::string id, int group, int label, std::span<const std::uint8_t> served,
                              std::span<const double> offer_prob) {
    ECOFAIR_REQUIRE(served.size() == lenders_ && offer_prob.size() == lenders_, ErrorCode::ArityMismatch,
                    "row width does not match lender count");
    ECOFAIR_REQUIRE(group == 0 || group == 1, ErrorCode::InvalidArgument, "group must be 0 or 1");
    ECOFAIR_REQUIRE(label == 0 || label == 1, ErrorCode::InvalidArgument, "label must be 0 or 1");
    ids_.push_back(std::move(id));
    groups_.push_back(static_cast<std::uint8_t>(group));
    labels_.push_back(static_cast<std::uint8_t>(label));
    for (std::size_t l = 0; l < lenders_; ++l) {
        served_.push_back(served[l] ? 1 : 0);
        probs_.push_back(offer_prob[l]);
    }
}

void PredictionTable::set_offer_prob(std::size_t row, std::size_t lender, double p) {
    probs_[row * lenders_ + lender] = p;
}

void PredictionTable::validate() const {
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t l = 0; l < lenders_; ++l) {
            const double p = offer_prob(i, l);
            ECOFAIR_REQUIRE(std::isfinite(p) && p >= 0.0 && p <= 1.0, ErrorCode::InvalidArgument,
                            "row " + std::to_string(i) + ": offer probability outside [0,1]");
            ECOFAIR_REQUIRE(served(i, l) || p == 0.0, ErrorCode::InvalidArgument,
                            "row " + std::to_string(i) + ": unserved lender " + std::to_string(l + 1) +
                                " has nonzero offer probability");
        }
    }
}

void PredictionTable::write_csv(std::ostream& out) const {
    out << "id,group,label";
    for (std::size_t l = 1; l <= lenders_; ++l) out << ",served_" << l;
    for (std::size_t l = 1; l <= lenders_; ++l) out << ",p_" << l;
    out << '\n';
    for (std::size_t i = 0; i < size(); ++i) {
        out << ids_[i] << ',' << int(groups_[i]) << ',' << int(labels_[i]);
        for (std::size_t l = 0; l < lenders_; ++l) out << ',' << (served(i, l) ? 1 : 0);
        for (std::size_t l = 0; l < lenders_; ++l) out << ',' << format_double(offer_prob(i, l));
        out << '\n';
    }
}

PredictionTable PredictionTable::read_csv(std::istream& in) {
    std::string line;
    ECOFAIR_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseFailure, "missing header");
    const auto header = split_line(strip_cr(line));
    ECOFAIR_REQUIRE(header.size() >= 5 && (header.size() - 3) % 2 == 0, ErrorCode::ParseFailure,
                    "header must be id,group,label,served_1..served_n,p_1..p_n");
    const std::size_t n = (header.size() - 3) / 2;
    const char* fixed[] = {"id", "group", "label"};
    for (std::size_t c = 0; c < 3; ++c) {
        ECOFAIR_REQUIRE(header[c] == fixed[c], ErrorCode::MissingColumn, std::string("expected column ") + fixed[c]);
    }
    for (std::size_t l = 0; l < n; ++l) {
        ECOFAIR_REQUIRE(header[3 + l] == "served_" + std::to_string(l + 1), ErrorCode::MissingColumn,
                        "expected column served_" + std::to_string(l + 1));
        ECOFAIR_REQUIRE(header[3 + n + l] == "p_" + std::to_string(l + 1), ErrorCode::MissingColumn,
                        "expected column p_" + std::to_string(l + 1));
    }

    PredictionTable table(n);
    std::vector<std::uint8_t> served(n);
    std::vector<double> probs(n);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        if (line.empty()) continue;
        ++row;
        const auto cells = split_line(line);
        ECOFAIR_REQUIRE(cells.size() == header.size(), ErrorCode::ParseFailure,
                        "row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " cells");
        const int group = parse_cell<int>(cells[1], row, "group");
        const int label = parse_cell<int>(cells[2], row, "label");
        for (std::size_t l = 0; l < n; ++l) {
            const int s = parse_cell<int>(cells[3 + l], row, header[3 + l]);
            ECOFAIR_REQUIRE(s == 0 || s == 1, ErrorCode::ParseFailure,
                            "row " + std::to_string(row) + ": served flags must be 0 or 1");
            served[l] = static_cast<std::uint8_t>(s);
            probs[l] = parse_cell<double>(cells[3 + n + l], row, header[3 + n + l]);
        }
        ECOFAIR_REQUIRE((group == 0 || group == 1) && (label == 0 || label == 1), ErrorCode::ParseFailure,
                        "row " + std::to_string(row) + ": group and label must be 0 or 1");
        table.add_row(cells[0], group, label, served, probs);
    }
    table.validate();
    return table;
}

}  // namespace ecofair
