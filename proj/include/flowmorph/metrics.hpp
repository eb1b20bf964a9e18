#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowmorph {

/// Similarity scores indexed by (morph, contributing subject, verifier),
/// with one decision threshold per verifier. Every morph needs at least two
/// contributing subjects; the verifier axis is rectangular.
struct ScoreMatrix {
    std::vector<std::vector<std::vector<double>>> scores;  ///< [morph][subject][verifier]
    std::vector<double> thresholds;                        ///< per verifier

    int morph_count() const { return static_cast<int>(scores.size()); }
    int verifier_count() const { return static_cast<int>(thresholds.size()); }

    void validate() const {
        if (scores.empty()) throw std::invalid_argument("ScoreMatrix: no morphs");
        if (thresholds.empty()) throw std::invalid_argument("ScoreMatrix: no verifiers");
        for (const auto& morph : scores) {
            if (morph.size() < 2)
                throw std::invalid_argument("ScoreMatrix: every morph needs >= 2 subjects");
            for (const auto& subject : morph) {
                if (subject.size() != thresholds.size())
                    throw std::invalid_argument("ScoreMatrix: ragged verifier axis");
                for (double v : subject)
                    if (!std::isfinite(v))
                        throw std::invalid_argument("ScoreMatrix: non-finite score");
            }
        }
    }
};

namespace detail {

/// A verifier accepts a morph when even its worst contributing subject
/// clears the threshold. Strict inequality; ties count as rejection.
inline bool accepts(const ScoreMatrix& m, int morph, int verifier) {
    double worst = m.scores[morph][0][verifier];
    for (const auto& subject : m.scores[morph])
        worst = std::min(worst, subject[verifier]);
    return worst > m.thresholds[verifier];
}

}  // namespace detail

/// Mated morph presentation match rate for one verifier: the fraction of
/// morphs whose minimum subject similarity exceeds the threshold.
inline double mmpmr(const ScoreMatrix& matrix, int verifier) {
    matrix.validate();
    if (verifier < 0 || verifier >= matrix.verifier_count())
        throw std::out_of_range("mmpmr: verifier index out of range");
    int hits = 0;
    for (int m = 0; m < matrix.morph_count(); ++m)
        if (detail::accepts(matrix, m, verifier)) ++hits;
    return static_cast<double>(hits) / matrix.morph_count();
}

/// Morphing attack potential row: entry c-1 is the fraction of morphs
/// accepted (for all contributing subjects) by at least c verifiers.
inline std::vector<double> map_row(const ScoreMatrix& matrix) {
    matrix.validate();
    const int v_count = matrix.verifier_count();
    std::vector<int> counts(v_count + 1, 0);
    for (int m = 0; m < matrix.morph_count(); ++m) {
        int accepted = 0;
        for (int v = 0; v < v_count; ++v)
            if (detail::accepts(matrix, m, v)) ++accepted;
        ++counts[accepted];
    }
    std::vector<double> row(v_count);
    int at_least = 0;
    for (int c = v_count; c >= 1; --c) {
        at_least += counts[c];
        row[c - 1] = static_cast<double>(at_least) / matrix.morph_count();
    }
    return row;
}

struct ReconReport {
    double mse = 0.0;
    std::vector<double> per_sample;
};

/// Mean squared reconstruction error, per sample and aggregated.
inline ReconReport recon_mse(const std::vector<std::vector<double>>& originals,
                             const std::vector<std::vector<double>>& reconstructions) {
    if (originals.size() != reconstructions.size() || originals.empty())
        throw std::invalid_argument("recon_mse: sample counts disagree or empty");
    ReconReport report;
    report.per_sample.reserve(originals.size());
    for (std::size_t i = 0; i < originals.size(); ++i) {
        const auto& a = originals[i];
        const auto& b = reconstructions[i];
        if (a.size() != b.size() || a.empty())
            throw std::invalid_argument("recon_mse: dimension mismatch at sample " +
                                        std::to_string(i));
        double acc = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
        report.per_sample.push_back(acc / a.size());
    }
    double total = 0.0;
    for (double v : report.per_sample) total += v;
    report.mse = total / report.per_sample.size();
    return report;
}

/// Cosine similarity clamped to [-1, 1] against rounding. Bitwise-identical
/// or bitwise-negated inputs return exactly 1 and -1.
inline double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: dimension mismatch");
    bool zero = true;
    for (double x : u)
        if (x != 0.0) zero = false;
    if (!zero) {
        if (u == v) return 1.0;
        bool negated = true;
        for (std::size_t i = 0; i < u.size(); ++i)
            if (u[i] != -v[i]) negated = false;
        if (negated) return -1.0;
    }
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine_similarity: zero-norm input");
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

/// Decision threshold from an impostor score sample at a requested false
/// match rate: the empirical (1-fmr) quantile, higher-value convention at
/// ties, so that the fraction of impostor scores strictly above the returned
/// threshold does not exceed fmr.
inline double threshold_at_fmr(std::vector<double> impostor_scores, double fmr) {
    if (impostor_scores.empty()) throw std::invalid_argument("threshold_at_fmr: empty sample");
    if (!(fmr >= 0.0 && fmr <= 1.0))
        throw std::invalid_argument("threshold_at_fmr: fmr outside [0,1]");
    std::sort(impostor_scores.begin(), impostor_scores.end());
    const auto n = static_cast<double>(impostor_scores.size());
    auto rank = static_cast<std::size_t>(std::ceil((1.0 - fmr) * n));
    rank = std::clamp<std::size_t>(rank, 1, impostor_scores.size());
    return impostor_scores[rank - 1];
}

}  // namespace flowmorph
