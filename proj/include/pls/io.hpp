#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pls/errors.hpp"
#include "pls/model.hpp"

namespace pls {

using ordered_json = nlohmann::ordered_json;

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_sig17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline std::string csv_row(const double* vals, std::size_t count) {
    std::string row;
    for (std::size_t j = 0; j < count; ++j) {
        if (j) row.push_back(',');
        row += format_sig17(vals[j]);
    }
    row += "\r\n";
    return row;
}

inline std::vector<Vec> parse_csv_numeric(const std::string& text) {
    std::vector<Vec> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        Vec row;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string cell = line.substr(start, comma == std::string::npos
                                                            ? std::string::npos
                                                            : comma - start);
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw config_error("csv: non-numeric cell '" + cell + "'");
            row.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw config_error("csv: ragged rows");
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot write file: " + path);
    out << text;
}

inline ordered_json shape_to_json(const DesignShape& shape) {
    ordered_json j;
    if (const auto* v = std::get_if<VectorShape>(&shape)) {
        j["shape"] = "vector";
        j["p"] = v->p;
    } else if (const auto* g = std::get_if<GroupedShape>(&shape)) {
        j["shape"] = "grouped";
        ordered_json blocks = ordered_json::array();
        for (const auto& [b, e] : g->blocks) blocks.push_back({b, e});
        j["groups"] = blocks;
    } else {
        const auto& m = std::get<MatrixShape>(shape);
        j["shape"] = "matrix";
        j["k"] = m.k;
        j["m"] = m.m;
    }
    return j;
}

inline DesignShape shape_from_json(const ordered_json& j) {
    const std::string kind = j.at("shape").get<std::string>();
    if (kind == "vector") return VectorShape{j.at("p").get<std::size_t>()};
    if (kind == "grouped") {
        GroupedShape g;
        for (const auto& pair : j.at("groups"))
            g.blocks.emplace_back(pair.at(0).get<std::size_t>(), pair.at(1).get<std::size_t>());
        return g;
    }
    if (kind == "matrix")
        return MatrixShape{j.at("k").get<std::size_t>(), j.at("m").get<std::size_t>()};
    throw config_error("sidecar: unknown shape '" + kind + "'");
}

// Design on disk: CSV matrix (one row per observation) plus a JSON
// sidecar with the shape metadata. With a response, y is the final CSV
// column and the sidecar says so.
inline void save_design_csv(const DesignOperator& d, const std::string& csv_path,
                            const std::string& sidecar_path, const Vec* response = nullptr) {
    std::string text;
    Vec row(d.dim() + (response ? 1 : 0));
    for (std::size_t i = 0; i < d.n(); ++i) {
        for (std::size_t j = 0; j < d.dim(); ++j) row[j] = d.x(i, j);
        if (response) row[d.dim()] = (*response)[i];
        text += csv_row(row.data(), row.size());
    }
    write_text_file(csv_path, text);

    ordered_json j = shape_to_json(d.shape);
    j["n"] = d.n();
    j["response"] = response != nullptr;
    write_text_file(sidecar_path, j.dump(2) + "\n");
}

struct LoadedInstance {
    DesignOperator design;
    Vec y;  // empty when the file has no response column
};

inline LoadedInstance load_design_csv(const std::string& csv_path,
                                      const std::string& sidecar_path) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_text_file(sidecar_path));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("sidecar: ") + e.what());
    }
    const DesignShape shape = shape_from_json(j);
    const bool has_response = j.value("response", false);
    const std::size_t d = shape_dim(shape);

    const auto rows = parse_csv_numeric(read_text_file(csv_path));
    if (rows.empty()) throw config_error("design csv: no rows");
    const std::size_t expect_cols = d + (has_response ? 1 : 0);
    if (rows.front().size() != expect_cols)
        throw config_error("design csv: column count does not match sidecar shape");
    if (j.contains("n") && j.at("n").get<std::size_t>() != rows.size())
        throw config_error("design csv: row count does not match sidecar n");

    Mat x(rows.size(), d);
    Vec y;
    if (has_response) y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) x(i, k) = rows[i][k];
        if (has_response) y[i] = rows[i][d];
    }
    return LoadedInstance{make_design(std::move(x), shape), std::move(y)};
}

}  // namespace pls
