#include "exprsaug/labels.hpp"

#include <cmath>
#include <utility>

#include "exprsaug/errors.hpp"
#include "exprsaug/text.hpp"

namespace exprsaug {

TissueGroupMap TissueGroupMap::builtin() {
    const std::vector<std::pair<std::string, std::vector<std::string>>> table = {
        {"blood_group",
         {"blood", "blood plasma", "blood serum", "peripheral blood", "umbilical cord blood",
          "serum", "buffy coat", "immortal human B cell", "liver", "lymphoblastoid cell"}},
        {"brain_group",
         {"brain", "cingulate gyrus", "motor cortex", "prefrontal cortex", "neocortex"}},
        {"epithelium_group", {"skin", "dermis", "epidermis", "breast", "oral mucosa", "larynx"}},
        {"gland_group",
         {"prostate gland", "testis", "kidney", "bladder", "uterine endometrium", "tonsil",
          "lymph node"}},
        {"intestine_group", {"intestine", "colon", "ileal mucosa"}},
    };
    std::map<std::string, std::string> members;
    for (const auto& [group, tissues] : table)
        for (const auto& t : tissues) members.emplace(t, group);
    return TissueGroupMap(std::move(members));
}

TissueGroupMap::TissueGroupMap(std::map<std::string, std::string> members) {
    for (auto& [tissue, group] : members) {
        auto [it, inserted] = members_.emplace(text::to_lower(tissue), group);
        if (!inserted && it->second != group)
            throw DataError("tissue '" + tissue + "' maps to more than one group");
    }
}

std::optional<std::string> TissueGroupMap::group_of(std::string_view tissue) const {
    auto it = members_.find(text::to_lower(tissue));
    if (it == members_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::string bound_text(double v) {
    if (v == std::floor(v)) return std::to_string(static_cast<long long>(v));
    return text::format_real(v);
}

}  // namespace

AgeBinning::AgeBinning(std::vector<AgeInterval> intervals) : intervals_(std::move(intervals)) {
    if (intervals_.empty()) throw DataError("age binning needs at least one interval");
    if (intervals_.front().lower != 0.0 || !intervals_.front().lower_inclusive)
        throw DataError("age binning must start at an inclusive 0");
    if (intervals_.back().upper != kMaxBinnedAge)
        throw DataError("age binning must end at 110");
    for (std::size_t i = 0; i < intervals_.size(); ++i) {
        const auto& iv = intervals_[i];
        if (!(iv.lower < iv.upper)) throw DataError("age interval bounds must increase");
        if (i > 0 && (iv.lower != intervals_[i - 1].upper || iv.lower_inclusive))
            throw DataError("age intervals must be contiguous and non-overlapping");
    }
}

AgeBinning AgeBinning::from_cuts(const std::vector<double>& cuts) {
    std::vector<AgeInterval> out;
    double lower = 0.0;
    for (std::size_t i = 0; i <= cuts.size(); ++i) {
        const double upper = i < cuts.size() ? cuts[i] : kMaxBinnedAge;
        const bool first = i == 0;
        std::string label = (first ? "[" : "(") + bound_text(lower) + ";" + bound_text(upper) + "]";
        out.push_back({lower, upper, first, std::move(label)});
        lower = upper;
    }
    return AgeBinning(std::move(out));
}

AgeBinning AgeBinning::scheme(int intervals) {
    switch (intervals) {
        case 2: return from_cuts({65});
        case 3: return from_cuts({45, 70});
        case 4: return from_cuts({30, 60, 80});
        default: throw UsageError("age scheme must be 2, 3 or 4 intervals");
    }
}

const std::string& AgeBinning::bin(double age) const {
    if (!std::isfinite(age) || age < 0.0 || age > kMaxBinnedAge)
        throw DataError("age " + text::format_real(age) + " outside [0, 110]");
    for (const auto& iv : intervals_) {
        const bool above_lower = iv.lower_inclusive ? age >= iv.lower : age > iv.lower;
        if (above_lower && age <= iv.upper) return iv.label;
    }
    throw DataError("age " + text::format_real(age) + " not covered by binning");
}

}  // namespace exprsaug
