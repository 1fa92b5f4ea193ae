#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace exprsaug {

/// Tissue name -> tissue group, built from the ontology-derived grouping table.
class TissueGroupMap {
public:
    /// The built-in five-group table (blood, brain, epithelium, gland, intestine).
    static TissueGroupMap builtin();

    explicit TissueGroupMap(std::map<std::string, std::string> members);

    /// Group of `tissue` (case-insensitive), or nullopt when unmapped.
    std::optional<std::string> group_of(std::string_view tissue) const;
    const std::map<std::string, std::string>& members() const noexcept { return members_; }

private:
    std::map<std::string, std::string> members_;
};

/// One age interval. The lower bound is inclusive only for the first interval.
struct AgeInterval {
    double lower;
    double upper;
    bool lower_inclusive;
    std::string label;
};

/// Contiguous partition of [0, 110] years into labelled intervals.
class AgeBinning {
public:
    /// Preloaded schemes with 2, 3 or 4 intervals.
    static AgeBinning scheme(int intervals);

    /// Builds intervals from ascending cut points strictly inside (0, 110).
    static AgeBinning from_cuts(const std::vector<double>& cuts);

    const std::vector<AgeInterval>& intervals() const noexcept { return intervals_; }
    int size() const noexcept { return static_cast<int>(intervals_.size()); }

    /// Label of the unique interval containing `age`; throws DataError outside [0, 110].
    const std::string& bin(double age) const;

private:
    explicit AgeBinning(std::vector<AgeInterval> intervals);
    std::vector<AgeInterval> intervals_;
};

inline constexpr double kMaxBinnedAge = 110.0;

}  // namespace exprsaug
