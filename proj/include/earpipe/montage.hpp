#pragma once

// cEEGrid electrode layout, amplifier channel mapping and re-referencing.

#include "earpipe/recording.hpp"

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace earpipe::montage {

enum class Side { L, R };

/// One of the ten positions L1..L10 / R1..R10 along each c-shaped grid.
struct ElectrodeLabel {
    Side side = Side::L;
    int index = 1;

    auto operator<=>(const ElectrodeLabel&) const = default;

    std::string str() const;
    /// Throws ConfigError for anything outside the canonical 20 labels.
    static ElectrodeLabel parse(std::string_view text);
};

inline constexpr int kElectrodesPerEar = 10;
inline constexpr int kAmplifierChannels = 16;

struct MontageMap {
    std::map<ElectrodeLabel, int> channel_of; ///< amplifier channel, 1-based
    ElectrodeLabel reference;
    ElectrodeLabel ground;
    std::set<ElectrodeLabel> excluded;
    /// Right ear on channels 1-8, left ear on 9-16.
    bool ear_split = true;

    std::optional<int> channel(const ElectrodeLabel& e) const;
};

enum class ExclusionProfile {
    AboveEar, ///< leave out L3/R3
    BelowEar, ///< leave out L8/R8
};

/// Reference R6, ground L6; right ear on the Cyton pins, left ear on the Daisy.
MontageMap default_montage(ExclusionProfile profile = ExclusionProfile::AboveEar);

/// Names of violated invariants; empty when the map is valid.
/// Possible entries: "injectivity", "channel-coverage", "role-disjoint",
/// "one-excluded-per-ear", "ear-split".
std::vector<std::string> validate(const MontageMap& m);

/// Rows "label,role,channel"; role in {data, reference, ground, excluded}.
MontageMap read_montage_csv(const std::filesystem::path& path);
void write_montage_csv(const std::filesystem::path& path, const MontageMap& m);

/// Channel labels in amplifier order ("R1", ... ) for a valid map.
std::vector<std::string> channel_labels(const MontageMap& m);

/// x <- x - (x_left + x_right) / 2 for every channel.
Recording rereference_linked_mastoid(const Recording& rec, const MontageMap& m,
                                     ElectrodeLabel left = {Side::L, 5},
                                     ElectrodeLabel right = {Side::R, 5});

} // namespace earpipe::montage
