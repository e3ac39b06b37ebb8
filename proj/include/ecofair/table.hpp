#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ecofair {

/// Per-individual record of group, true label, and each lender's offer
/// probability (0/1 for deterministic classifiers). Stored column-wise.
///
/// A lender that does not serve a row has served == false and offer
/// probability exactly 0.
class PredictionTable {
public:
    explicit PredictionTable(std::size_t lenders);

    std::size_t lenders() const noexcept { return lenders_; }
    std::size_t size() const noexcept { return groups_.size(); }
    bool empty() const noexcept { return groups_.empty(); }

    void reserve(std::size_t rows);
    void add_row(std::string id, int group, int label, std::span<const std::uint8_t> served,
                 std::span<const double> offer_prob);

    const std::string& id(std::size_t row) const { return ids_[row]; }
    int group(std::size_t row) const { return groups_[row]; }
    int label(std::size_t row) const { return labels_[row]; }
    bool served(std::size_t row, std::size_t lender) const { return served_[row * lenders_ + lender] != 0; }
    double offer_prob(std::size_t row, std::size_t lender) const { return probs_[row * lenders_ + lender]; }
    std::span<const double> offer_probs(std::size_t row) const {
        return {probs_.data() + row * lenders_, lenders_};
    }
    std::span<const std::uint8_t> served_flags(std::size_t row) const {
        return {served_.data() + row * lenders_, lenders_};
    }

    void set_offer_prob(std::size_t row, std::size_t lender, double p);

    // Throws InvalidArgument describing the first offending row.
    void validate() const;

    // Header: id,group,label,served_1..served_n,p_1..p_n. Probabilities are
    // written with 17 significant digits so they round-trip exactly.
    void write_csv(std::ostream& out) const;
    static PredictionTable read_csv(std::istream& in);

private:
    std::size_t lenders_;
    std::vector<std::string> ids_;
    std::vector<std::uint8_t> groups_;
    std::vector<std::uint8_t> labels_;
    std::vector<std::uint8_t> served_;
    std::vector<double> probs_;
};

std::string format_double(double value);

}  // namespace ecofair
