#include "ctqe/eval.hpp"

#include "ctqe/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace ctqe {

using nlohmann::json;

namespace {

double dcg_at_k(const std::vector<int>& grades, int k) {
    double dcg = 0.0;
    std::size_t n = std::min(grades.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i)
        dcg += (std::exp2(static_cast<double>(grades[i])) - 1.0) /
               std::log2(static_cast<double>(i) + 2.0);
    return dcg;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> fields;
    std::string f;
    while (in >> f) fields.push_back(f);
    return fields;
}

} // namespace

NdcgResult ndcg_at_k(const RunFile& run, const Qrels& qrels, int k) {
    if (k < 1) throw UsageError("ndcg cutoff k must be >= 1");
    NdcgResult result;
    double sum = 0.0;
    for (const auto& [qid, ranking] : run.rankings) {
        auto qit = qrels.grades.find(qid);
        if (qit == qrels.grades.end()) {
            ++result.missing_from_qrels;
            continue;
        }
        const auto& judged = qit->second;
        std::vector<int> ideal;
        ideal.reserve(judged.size());
        for (const auto& [doc, grade] : judged) ideal.push_back(grade);
        std::sort(ideal.rbegin(), ideal.rend());
        double idcg = dcg_at_k(ideal, k);
        if (idcg == 0.0) {
            ++result.excluded_zero_idcg;
            continue;
        }
        std::vector<int> grades;
        grades.reserve(ranking.size());
        for (const auto& entry : ranking) {
            auto dit = judged.find(entry.doc_id);
            grades.push_back(dit == judged.end() ? 0 : dit->second);
        }
        double value = dcg_at_k(grades, k) / idcg;
        result.per_query[qid] = value;
        sum += value;
        ++result.evaluated;
    }
    result.mean = result.evaluated ? sum / result.evaluated : 0.0;
    return result;
}

Qrels read_qrels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open qrels file: " + path);
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_ws(line);
        if (fields.size() != 4)
            throw DataError("qrels line " + std::to_string(lineno) + ": expected 4 fields");
        int grade;
        try {
            grade = std::stoi(fields[3]);
        } catch (const std::exception&) {
            throw DataError("qrels line " + std::to_string(lineno) + ": bad grade");
        }
        if (grade < 0)
            throw DataError("qrels line " + std::to_string(lineno) + ": negative grade");
        qrels.grades[fields[0]][fields[2]] = grade;
    }
    return qrels;
}

void write_run(const std::string& path, const RunFile& run) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write run file: " + path);
    out << std::fixed << std::setprecision(6);
    for (const auto& [qid, ranking] : run.rankings) {
        int rank = 1;
        for (const auto& entry : ranking)
            out << qid << " Q0 " << entry.doc_id << " " << rank++ << " " << entry.score << " "
                << run.tag << "\n";
    }
}

RunFile read_run(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open run file: " + path);
    struct Row {
        std::string doc_id;
        int rank;
        double score;
    };
    std::map<std::string, std::vector<Row>> rows;
    RunFile run;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_ws(line);
        if (fields.size() != 6)
            throw DataError("run line " + std::to_string(lineno) + ": expected 6 fields");
        try {
            rows[fields[0]].push_back({fields[2], std::stoi(fields[3]), std::stod(fields[4])});
        } catch (const std::exception&) {
            throw DataError("run line " + std::to_string(lineno) + ": bad rank or score");
        }
        run.tag = fields[5];
    }
    for (auto& [qid, qrows] : rows) {
        std::sort(qrows.begin(), qrows.end(),
                  [](const Row& a, const Row& b) { return a.rank < b.rank; });
        std::vector<RunEntry> ranking;
        std::set<std::string> seen;
        for (std::size_t i = 0; i < qrows.size(); ++i) {
            if (qrows[i].rank != static_cast<int>(i) + 1)
                throw DataError("run query " + qid + ": ranks are not 1..n");
            if (!seen.insert(qrows[i].doc_id).second)
                throw DataError("run query " + qid + ": duplicate doc " + qrows[i].doc_id);
            if (i > 0 && qrows[i].score > qrows[i - 1].score)
                throw DataError("run query " + qid + ": score increases at rank " +
                                std::to_string(qrows[i].rank));
            ranking.push_back({qrows[i].doc_id, qrows[i].score});
        }
        run.rankings[qid] = std::move(ranking);
    }
    return run;
}

std::vector<Query> read_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open queries file: " + path);
    std::vector<Query> queries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            queries.push_back({std::to_string(lineno), line});
        else
            queries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return queries;
}

json CostReport::to_json() const {
    json per = json::array();
    for (const auto& q : per_query)
        per.push_back({{"query_id", q.query_id},
                       {"output_tokens", q.output_tokens},
                       {"llm_seconds", q.llm_seconds},
                       {"retrieval_seconds", q.retrieval_seconds},
                       {"wall_seconds", q.wall_seconds}});
    return {{"per_query", std::move(per)},
            {"mean_tokens", mean_tokens},
            {"mean_llm_seconds", mean_llm_seconds},
            {"mean_retrieval_seconds", mean_retrieval_seconds},
            {"mean_wall_seconds", mean_wall_seconds}};
}

std::string CostReport::format_table() const {
    std::ostringstream out;
    out << std::left << std::setw(12) << "query" << std::right << std::setw(10) << "tokens"
        << std::setw(12) << "llm(s)" << std::setw(14) << "retrieval(s)" << std::setw(10)
        << "wall(s)" << "\n";
    out << std::fixed;
    for (const auto& q : per_query)
        out << std::left << std::setw(12) << q.query_id << std::right << std::setw(10)
            << q.output_tokens << std::setprecision(4) << std::setw(12) << q.llm_seconds
            << std::setw(14) << q.retrieval_seconds << std::setw(10) << q.wall_seconds << "\n";
    out << std::left << std::setw(12) << "mean" << std::right << std::setw(10)
        << std::setprecision(1) << mean_tokens << std::setprecision(4) << std::setw(12)
        << mean_llm_seconds << std::setw(14) << mean_retrieval_seconds << std::setw(10)
        << mean_wall_seconds << "\n";
    return out.str();
}

MeasureResult measure(const std::function<PipelineOutcome(const Query&)>& pipeline,
                      const std::vector<Query>& queries, const std::string& tag) {
    MeasureResult result;
    result.run.tag = tag;
    double sum_tokens = 0, sum_llm = 0, sum_retrieval = 0, sum_wall = 0;
    for (const auto& query : queries) {
        auto t0 = std::chrono::steady_clock::now();
        PipelineOutcome outcome;
        try {
            outcome = pipeline(query);
        } catch (const std::exception& e) {
            result.failed_queries.push_back(query.query_id + ": " + e.what());
            continue;
        }
        double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        QueryCost cost;
        cost.query_id = query.query_id;
        cost.output_tokens = outcome.output_tokens;
        cost.llm_seconds = outcome.llm_seconds;
        cost.retrieval_seconds = std::max(0.0, wall - outcome.llm_seconds);
        cost.wall_seconds = wall;
        result.report.per_query.push_back(cost);
        // Empty rankings are omitted: the run file format cannot express
        // them, and nDCG averages over queries present in the run.
        if (!outcome.ranked.empty()) {
            std::vector<RunEntry> ranking;
            ranking.reserve(outcome.ranked.size());
            for (const auto& sd : outcome.ranked) ranking.push_back({sd.doc_id, sd.score});
            result.run.rankings[query.query_id] = std::move(ranking);
        }
        sum_tokens += cost.output_tokens;
        sum_llm += cost.llm_seconds;
        sum_retrieval += cost.retrieval_seconds;
        sum_wall += cost.wall_seconds;
    }
    std::size_t n = result.report.per_query.size();
    if (n) {
        result.report.mean_tokens = sum_tokens / static_cast<double>(n);
        result.report.mean_llm_seconds = sum_llm / static_cast<double>(n);
        result.report.mean_retrieval_seconds = sum_retrieval / static_cast<double>(n);
        result.report.mean_wall_seconds = sum_wall / static_cast<double>(n);
    }
    return result;
}

} // namespace ctqe
