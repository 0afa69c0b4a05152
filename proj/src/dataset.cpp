#include "arclat/dataset.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace arclat {

namespace {

using nlohmann::json;

json plane_to_json(const std::vector<double>& plane) {
    json rows = json::array();
    for (std::size_t c = 0; c < kControlPoints; ++c) {
        json row = json::array();
        for (std::size_t l = 0; l < kLeafPairs; ++l) row.push_back(plane[c * kLeafPairs + l]);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<double> plane_from_json(const json& rows, std::size_t line, const char* what) {
    if (!rows.is_array() || rows.size() != kControlPoints)
        throw DimensionMismatch(std::string(what) + " at line " + std::to_string(line) + " has " +
                                std::to_string(rows.is_array() ? rows.size() : 0) +
                                " control points, expected " + std::to_string(kControlPoints));
    std::vector<double> plane(kPlaneSize);
    for (std::size_t c = 0; c < kControlPoints; ++c) {
        const json& row = rows[c];
        if (!row.is_array() || row.size() != kLeafPairs)
            throw DimensionMismatch(std::string(what) + " at line " + std::to_string(line) +
                                    ", control point " + std::to_string(c) + " has " +
                                    std::to_string(row.is_array() ? row.size() : 0) +
                                    " leaves, expected " + std::to_string(kLeafPairs));
        for (std::size_t l = 0; l < kLeafPairs; ++l) {
            if (!row[l].is_number())
                throw MalformedRecord(line, std::string(what) + " cell is not a number");
            plane[c * kLeafPairs + l] = row[l].get<double>();
        }
    }
    return plane;
}

}  // namespace

void save_dataset(const ArcDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    for (const Arc& arc : ds.arcs) {
        json rec;
        rec["id"] = arc.id;
        rec["positions"] = plane_to_json(arc.positions);
        rec["gaps"] = plane_to_json(arc.gaps);
        out << rec.dump() << '\n';
    }
    if (!out) throw Error("write failed for " + path);
}

ArcDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    ArcDataset ds;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw MalformedRecord(line_no, e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("positions") ||
            !rec.contains("gaps"))
            throw MalformedRecord(line_no, "expected object with id, positions, gaps");
        std::string id = rec["id"].get<std::string>();
        if (!ids.insert(id).second) throw MalformedRecord(line_no, "duplicate id " + id);
        ds.arcs.push_back(make_arc(plane_from_json(rec["positions"], line_no, "positions"),
                                   plane_from_json(rec["gaps"], line_no, "gaps"), std::move(id)));
    }
    return ds;
}

}  // namespace arclat
