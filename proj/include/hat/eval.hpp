#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hat/attack.hpp"
#include "hat/data.hpp"
#include "hat/error.hpp"
#include "hat/model.hpp"
#include "hat/retrieval.hpp"

namespace hat {

/// Relevance by the share-any-positive-label rule against a fixed reference.
struct RelevanceJudger {
    Label reference_label;

    bool relevant(const Label& candidate) const { return labels_match(reference_label, candidate); }
};

/// Denominator convention for average precision:
///  - retrieved_relevant: number of relevant items inside the top-M (default);
///  - total_relevant: min(total relevant in the database, M).
enum class ApDenominator { retrieved_relevant, total_relevant };

/// AP = sum_{k<=M} P(k)*rel(k) / denom with P(k) the precision at cutoff k.
/// Returns 0 when nothing relevant is retrieved in the top-M.
inline double average_precision(const RankedList& ranking, const RelevanceJudger& judger,
                                const std::vector<Label>& labels, std::size_t m,
                                ApDenominator denom = ApDenominator::retrieved_relevant,
                                std::size_t total_relevant = 0) {
    if (m < 1) raise(Errc::invalid_cutoff, "M must be >= 1");
    const std::size_t cutoff = std::min(m, ranking.size());
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < cutoff; ++k) {
        if (judger.relevant(labels[ranking[k].index])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    const std::size_t denominator =
        denom == ApDenominator::retrieved_relevant ? hits : std::min(total_relevant, m);
    return denominator == 0 ? 0.0 : sum / static_cast<double>(denominator);
}

struct PrPoint {
    std::size_t cutoff = 0;
    double recall = 0.0;
    double precision = 0.0;
};

struct PrCurve {
    std::vector<PrPoint> points;
    std::size_t excluded_queries = 0; // queries with zero relevant items in the database
};

struct EvalReport {
    std::vector<double> per_query_ap;
    double mean_ap = 0.0;
    PrCurve curve;
    // metadata
    std::string method;
    std::string reference; // "target" or "original"
    std::size_t bits = 0;
    std::size_t cutoff = 0;
};

/// Macro-averaged precision/recall at every cutoff k = 1..M. The recall
/// denominator is the total number of relevant items in the database; queries
/// without any relevant item are excluded (reported in the result).
inline PrCurve pr_curve(const std::vector<RankedList>& rankings, const std::vector<RelevanceJudger>& judgers,
                        const std::vector<Label>& labels, std::size_t m) {
    if (rankings.size() != judgers.size()) raise(Errc::dim_mismatch, "one judger per ranking required");
    if (m < 1) raise(Errc::invalid_cutoff, "M must be >= 1");

    PrCurve curve;
    std::vector<std::size_t> totals(rankings.size(), 0);
    std::vector<bool> included(rankings.size(), false);
    std::size_t used = 0;
    for (std::size_t q = 0; q < rankings.size(); ++q) {
        for (const Label& label : labels) totals[q] += judgers[q].relevant(label);
        included[q] = totals[q] > 0;
        if (included[q])
            ++used;
        else
            ++curve.excluded_queries;
    }
    if (used == 0) return curve;

    std::vector<std::size_t> hits(rankings.size(), 0);
    curve.points.reserve(m);
    for (std::size_t k = 1; k <= m; ++k) {
        double precision = 0.0;
        double recall = 0.0;
        for (std::size_t q = 0; q < rankings.size(); ++q) {
            if (!included[q]) continue;
            const RankedList& ranking = rankings[q];
            if (k <= ranking.size() && judgers[q].relevant(labels[ranking[k - 1].index])) ++hits[q];
            precision += static_cast<double>(hits[q]) / static_cast<double>(k);
            recall += static_cast<double>(hits[q]) / static_cast<double>(totals[q]);
        }
        curve.points.push_back(PrPoint{k, recall / used, precision / used});
    }
    return curve;
}

/// t-MAP: queries are ranked by the code of their adversarial features and
/// judged against the *target* label of each attack.
inline EvalReport t_map(std::span<const AttackResult> results, const CodeIndex& index, const HashModel& model,
                        std::size_t m, ApDenominator denom = ApDenominator::retrieved_relevant) {
    if (results.empty()) raise(Errc::invalid_argument, "no attack results to evaluate");
    EvalReport report;
    report.reference = "target";
    report.bits = index.bits;
    report.cutoff = m;
    report.per_query_ap.reserve(results.size());
    double sum = 0.0;
    for (const AttackResult& result : results) {
        const RankedList ranking = query(index, model.code(result.adversarial), m);
        const RelevanceJudger judger{result.target_label};
        std::size_t total = 0;
        if (denom == ApDenominator::total_relevant)
            for (const Label& label : index.labels) total += judger.relevant(label);
        const double ap = average_precision(ranking, judger, index.labels, m, denom, total);
        report.per_query_ap.push_back(ap);
        sum += ap;
    }
    report.mean_ap = sum / static_cast<double>(results.size());
    return report;
}

/// MAP with each query judged against its own label; reports the non-targeted
/// side effect when fed adversarial features.
inline EvalReport map_original(std::span<const Record> queries, const CodeIndex& index, const HashModel& model,
                               std::size_t m, ApDenominator denom = ApDenominator::retrieved_relevant) {
    if (queries.empty()) raise(Errc::invalid_argument, "no queries to evaluate");
    EvalReport report;
    report.reference = "original";
    report.bits = index.bits;
    report.cutoff = m;
    report.per_query_ap.reserve(queries.size());
    double sum = 0.0;
    for (const Record& record : queries) {
        const RankedList ranking = query(index, model.code(record.features), m);
        const RelevanceJudger judger{record.label};
        std::size_t total = 0;
        if (denom == ApDenominator::total_relevant)
            for (const Label& label : index.labels) total += judger.relevant(label);
        const double ap = average_precision(ranking, judger, index.labels, m, denom, total);
        report.per_query_ap.push_back(ap);
        sum += ap;
    }
    report.mean_ap = sum / static_cast<double>(queries.size());
    return report;
}

} // namespace hat
