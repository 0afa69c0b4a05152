#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "arclat/arc.hpp"

namespace arclat {

struct ArcDataset {
    std::vector<Arc> arcs;
    // Provenance of generated datasets; empty for loaded ones (the JSONL
    // format carries arcs only).
    std::uint64_t seed = 0;
    std::string config_digest;

    std::size_t size() const { return arcs.size(); }
    bool empty() const { return arcs.empty(); }
};

// JSON Lines, one arc per line:
//   {"id": "...", "positions": [[80 rows x 80 cols]], "gaps": [[...]]}
// Outer index is the control point. Doubles survive the roundtrip exactly.
void save_dataset(const ArcDataset& ds, const std::string& path);
ArcDataset load_dataset(const std::string& path);

}  // namespace arclat
