#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowmorph/metrics.hpp"
#include "flowmorph/solvers.hpp"

namespace flowmorph {

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Writes through a temporary file and renames into place, so a failed run
/// never leaves a partial output behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw std::runtime_error("cannot move " + tmp.string() + " into place: " + ec.message());
    }
}

/// Trajectory as CSV: knot index, time index, then the d state columns.
inline std::string trajectory_csv(const Trajectory& traj) {
    std::ostringstream out;
    const std::size_t d = traj.states.empty() ? 0 : traj.states.front().dim();
    out << "knot,time_index";
    for (std::size_t j = 0; j < d; ++j) out << ",x" << j;
    out << "\n";
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        out << k << "," << format_double(traj.states[k].time_index);
        for (double v : traj.states[k].x) out << "," << format_double(v);
        out << "\n";
    }
    return out.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        // trim surrounding whitespace
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

inline double parse_double_field(const std::string& s, int line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(std::string("line ") + std::to_string(line_no) + ": bad " + what +
                                 " value '" + s + "'");
    }
}

}  // namespace detail

/// Thresholds file: CSV with columns verifier_id,delta. The file order
/// defines the verifier order of the score matrix.
inline std::pair<std::vector<std::string>, std::vector<double>> load_thresholds_csv(
    std::istream& in) {
    std::vector<std::string> ids;
    std::vector<double> deltas;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line_no == 1 && line.rfind("verifier_id", 0) == 0)) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 2)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected 2 fields (verifier_id,delta), got " +
                                     std::to_string(fields.size()));
        if (std::find(ids.begin(), ids.end(), fields[0]) != ids.end())
            throw std::runtime_error("line " + std::to_string(line_no) + ": duplicate verifier '" +
                                     fields[0] + "'");
        ids.push_back(fields[0]);
        deltas.push_back(detail::parse_double_field(fields[1], line_no, "delta"));
    }
    if (ids.empty()) throw std::runtime_error("thresholds file has no rows");
    return {ids, deltas};
}

/// Score file: CSV with columns morph_id,subject_id,verifier_id,score.
/// Morph and subject order follow first appearance; every (morph, subject)
/// must carry a score for every verifier. Malformed rows are reported with
/// their line number.
inline ScoreMatrix load_scores_csv(std::istream& in, const std::vector<std::string>& verifier_ids,
                                   const std::vector<double>& thresholds) {
    std::vector<std::string> morph_ids;
    std::vector<std::vector<std::string>> subject_ids;  // per morph
    ScoreMatrix matrix;
    matrix.thresholds = thresholds;
    std::vector<std::vector<std::vector<bool>>> seen;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line_no == 1 && line.rfind("morph_id", 0) == 0)) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 4)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected 4 fields (morph_id,subject_id,verifier_id,score)"
                                     ", got " + std::to_string(fields.size()));
        const double value = detail::parse_double_field(fields[3], line_no, "score");

        const auto vit = std::find(verifier_ids.begin(), verifier_ids.end(), fields[2]);
        if (vit == verifier_ids.end())
            throw std::runtime_error("line " + std::to_string(line_no) + ": unknown verifier '" +
                                     fields[2] + "'");
        const auto v = static_cast<std::size_t>(vit - verifier_ids.begin());

        auto mit = std::find(morph_ids.begin(), morph_ids.end(), fields[0]);
        if (mit == morph_ids.end()) {
            morph_ids.push_back(fields[0]);
            subject_ids.emplace_back();
            matrix.scores.emplace_back();
            seen.emplace_back();
            mit = morph_ids.end() - 1;
        }
        const auto m = static_cast<std::size_t>(mit - morph_ids.begin());

        auto sit = std::find(subject_ids[m].begin(), subject_ids[m].end(), fields[1]);
        if (sit == subject_ids[m].end()) {
            subject_ids[m].push_back(fields[1]);
            matrix.scores[m].emplace_back(verifier_ids.size(), 0.0);
            seen[m].emplace_back(verifier_ids.size(), false);
            sit = subject_ids[m].end() - 1;
        }
        const auto s = static_cast<std::size_t>(sit - subject_ids[m].begin());

        if (seen[m][s][v])
            throw std::runtime_error("line " + std::to_string(line_no) + ": duplicate score for (" +
                                     fields[0] + "," + fields[1] + "," + fields[2] + ")");
        matrix.scores[m][s][v] = value;
        seen[m][s][v] = true;
    }

    if (matrix.scores.empty()) throw std::runtime_error("score file has no rows");
    for (std::size_t m = 0; m < seen.size(); ++m)
        for (std::size_t s = 0; s < seen[m].size(); ++s)
            for (std::size_t v = 0; v < seen[m][s].size(); ++v)
                if (!seen[m][s][v])
                    throw std::runtime_error("missing score for morph '" + morph_ids[m] +
                                             "' subject '" + subject_ids[m][s] + "' verifier '" +
                                             verifier_ids[v] + "'");
    matrix.validate();
    return matrix;
}

}  // namespace flowmorph
