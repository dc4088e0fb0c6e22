#include "ctqe/config.hpp"
#include "ctqe/errors.hpp"
#include "ctqe/eval.hpp"
#include "ctqe/expansion.hpp"
#include "ctqe/index.hpp"
#include "ctqe/pipeline.hpp"
#include "ctqe/prf.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctqe;

namespace {

// Config file first, then explicit flags on top.
struct ConfigOverrides {
    std::optional<std::string> retriever, mode, provider, mock_script, http_base_url, http_model,
        api_key_env, cache_dir, word_index, subword_index, vocab, corpus;
    std::optional<double> alpha, temperature, k1, b;
    std::optional<int> repetition_factor, top_k, max_tokens, top_k_alternates, prf_depth,
        prf_max_tokens, zero_top_n, per_channel_limit, encoder_dim;
    std::optional<bool> prf, drop_expansion_duplicates;
    std::optional<double> alpha_q, alpha_w, alpha_c, beta_q, beta_w, beta_c;
    std::optional<std::uint64_t> encoder_seed;

    void apply(PipelineConfig& cfg) const {
        auto set = [](auto& field, const auto& opt) {
            if (opt) field = *opt;
        };
        set(cfg.retriever, retriever);
        set(cfg.mode, mode);
        set(cfg.provider, provider);
        set(cfg.mock_script, mock_script);
        set(cfg.http_base_url, http_base_url);
        set(cfg.http_model, http_model);
        set(cfg.api_key_env, api_key_env);
        set(cfg.cache_dir, cache_dir);
        set(cfg.word_index, word_index);
        set(cfg.subword_index, subword_index);
        set(cfg.vocab, vocab);
        set(cfg.corpus, corpus);
        set(cfg.alpha, alpha);
        set(cfg.temperature, temperature);
        set(cfg.k1, k1);
        set(cfg.b, b);
        set(cfg.repetition_factor, repetition_factor);
        set(cfg.top_k, top_k);
        set(cfg.max_tokens, max_tokens);
        set(cfg.top_k_alternates, top_k_alternates);
        set(cfg.prf_depth, prf_depth);
        set(cfg.prf_max_tokens, prf_max_tokens);
        set(cfg.zero_top_n, zero_top_n);
        set(cfg.per_channel_limit, per_channel_limit);
        set(cfg.encoder_dim, encoder_dim);
        set(cfg.prf, prf);
        set(cfg.drop_expansion_duplicates, drop_expansion_duplicates);
        set(cfg.alpha_q, alpha_q);
        set(cfg.alpha_w, alpha_w);
        set(cfg.alpha_c, alpha_c);
        set(cfg.beta_q, beta_q);
        set(cfg.beta_w, beta_w);
        set(cfg.beta_c, beta_c);
        set(cfg.encoder_seed, encoder_seed);
    }
};

void add_config_flags(CLI::App* cmd, std::optional<std::string>& config_path,
                      ConfigOverrides& ov) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its values");
    cmd->add_option("--retriever", ov.retriever, "bm25 | dense | sparse")
        ->check(CLI::IsMember({"bm25", "dense", "sparse"}));
    cmd->add_option("--alpha", ov.alpha, "lexical interpolation weight");
    cmd->add_option("--repetition-factor", ov.repetition_factor, "query replication factor R");
    cmd->add_option("--mode", ov.mode, "candidate filter mode")
        ->check(CLI::IsMember({"all", "dedup", "dedup_first_pos"}));
    cmd->add_option("--top-k", ov.top_k, "result list depth");
    cmd->add_option("--max-tokens", ov.max_tokens, "generation token budget");
    cmd->add_option("--temperature", ov.temperature);
    cmd->add_option("--top-k-alternates", ov.top_k_alternates, "candidate tokens per step (k)");
    cmd->add_flag("--prf,!--no-prf", ov.prf, "condition generation on first-stage retrieval");
    cmd->add_option("--prf-depth", ov.prf_depth);
    cmd->add_option("--prf-max-tokens", ov.prf_max_tokens);
    cmd->add_option("--alpha-q", ov.alpha_q);
    cmd->add_option("--alpha-w", ov.alpha_w);
    cmd->add_option("--alpha-c", ov.alpha_c);
    cmd->add_option("--beta-q", ov.beta_q);
    cmd->add_option("--beta-w", ov.beta_w);
    cmd->add_option("--beta-c", ov.beta_c);
    cmd->add_option("--zero-top-n", ov.zero_top_n);
    cmd->add_option("--per-channel-limit", ov.per_channel_limit);
    cmd->add_flag("--drop-expansion-duplicates,!--keep-expansion-duplicates",
                  ov.drop_expansion_duplicates);
    cmd->add_option("--k1", ov.k1);
    cmd->add_option("--b", ov.b);
    cmd->add_option("--provider", ov.provider, "mock | http")
        ->check(CLI::IsMember({"mock", "http"}));
    cmd->add_option("--mock-script", ov.mock_script, "scripted traces for the mock provider");
    cmd->add_option("--http-base-url", ov.http_base_url);
    cmd->add_option("--http-model", ov.http_model);
    cmd->add_option("--api-key-env", ov.api_key_env);
    cmd->add_option("--cache-dir", ov.cache_dir, "response cache directory");
    cmd->add_option("--encoder-seed", ov.encoder_seed);
    cmd->add_option("--encoder-dim", ov.encoder_dim);
    cmd->add_option("--word-index", ov.word_index);
    cmd->add_option("--subword-index", ov.subword_index);
    cmd->add_option("--vocab", ov.vocab, "subword vocab file (one piece per line)");
    cmd->add_option("--corpus", ov.corpus, "JSONL corpus (doc_id, text)");
}

PipelineConfig effective_config(const std::optional<std::string>& config_path,
                                const ConfigOverrides& ov) {
    PipelineConfig cfg;
    if (config_path) cfg = PipelineConfig::load_file(*config_path);
    ov.apply(cfg);
    cfg.validate();
    return cfg;
}

std::vector<Query> gather_queries(const std::optional<std::string>& query,
                                  const std::optional<std::string>& queries_file) {
    if (query && queries_file)
        throw UsageError("give either --query or --queries, not both");
    if (query) return {{"q1", *query}};
    if (queries_file) return read_queries(*queries_file);
    throw UsageError("one of --query or --queries is required");
}

SubwordVocab derive_vocab(const std::vector<Document>& docs, const AnalyzerConfig& analyzer) {
    // Default vocab: every corpus word token plus its single codepoints.
    // A real tokenizer vocab can be supplied with --vocab.
    SubwordVocab vocab;
    for (const auto& doc : docs) {
        for (const auto& token : analyze(doc.text, analyzer)) {
            vocab.insert(token);
            std::size_t i = 0;
            while (i < token.size()) {
                std::size_t n = 1;
                unsigned char c = static_cast<unsigned char>(token[i]);
                if ((c & 0xE0) == 0xC0) n = 2;
                else if ((c & 0xF0) == 0xE0) n = 3;
                else if ((c & 0xF8) == 0xF0) n = 4;
                n = std::min(n, token.size() - i);
                vocab.insert(token.substr(i, n));
                i += n;
            }
        }
    }
    return vocab;
}

int cmd_index(const std::string& corpus_path, const std::string& out_word,
              const std::string& out_subword, const std::optional<std::string>& vocab_path) {
    AnalyzerConfig analyzer;
    auto docs = read_jsonl_corpus(corpus_path);
    auto word = InvertedIndex::build_word(docs, analyzer);
    SubwordVocab vocab =
        vocab_path ? SubwordVocab::load_file(*vocab_path) : derive_vocab(docs, analyzer);
    auto subword = InvertedIndex::build_subword(docs, analyzer, vocab);
    word.save(out_word);
    subword.save(out_subword);
    std::cout << "indexed " << word.num_docs() << " documents\n"
              << "word index: " << word.vocab_size() << " terms -> " << out_word << "\n"
              << "subword index: " << subword.vocab_size() << " terms -> " << out_subword
              << "\n";
    return 0;
}

int cmd_expand(const PipelineConfig& cfg, const std::vector<Query>& queries,
               const std::string& out_path) {
    Pipeline pipeline = Pipeline::build(cfg, /*with_provider=*/true, /*with_ranking=*/false);
    std::vector<ExpansionArtifact> artifacts;
    artifacts.reserve(queries.size());
    for (const auto& query : queries) artifacts.push_back(pipeline.expand(query));
    write_artifact_file(out_path, artifacts, cfg.to_json());
    std::cout << "expanded " << artifacts.size() << " queries -> " << out_path << "\n";
    return 0;
}

int cmd_search(const PipelineConfig& cfg, const std::optional<std::string>& query,
               const std::optional<std::string>& queries_file,
               const std::optional<std::string>& expansion_path, const std::string& out_path,
               const std::string& tag) {
    MeasureResult result;
    if (expansion_path) {
        Pipeline pipeline = Pipeline::build(cfg, /*with_provider=*/false);
        auto artifacts = read_artifact_file(*expansion_path);
        std::vector<Query> queries;
        queries.reserve(artifacts.size());
        std::map<std::string, const ExpansionArtifact*> by_id;
        for (const auto& a : artifacts) {
            queries.push_back({a.query_id, a.query});
            by_id[a.query_id] = &a;
        }
        result = measure(
            [&](const Query& q) { return pipeline.run_from_artifact(*by_id.at(q.query_id)); },
            queries, tag);
    } else {
        Pipeline pipeline = Pipeline::build(cfg);
        auto queries = gather_queries(query, queries_file);
        result = measure([&](const Query& q) { return pipeline.run(q); }, queries, tag);
    }
    for (const auto& failure : result.failed_queries)
        std::cerr << "query failed: " << failure << "\n";
    write_run(out_path, result.run);
    std::cout << "wrote " << result.run.rankings.size() << " rankings -> " << out_path << "\n";
    std::cout << "config: " << cfg.to_json().dump() << "\n";
    if (!result.failed_queries.empty()) throw ProviderError("some queries failed");
    return 0;
}

int cmd_eval(const std::string& run_path, const std::string& qrels_path, int k,
             const std::optional<std::string>& out_path) {
    auto run = read_run(run_path);
    auto qrels = read_qrels(qrels_path);
    auto result = ndcg_at_k(run, qrels, k);
    json j = {{"k", k},
              {"mean_ndcg", result.mean},
              {"evaluated", result.evaluated},
              {"excluded_zero_idcg", result.excluded_zero_idcg},
              {"missing_from_qrels", result.missing_from_qrels},
              {"per_query", result.per_query}};
    std::string text = j.dump(2) + "\n";
    if (out_path) {
        std::ofstream out(*out_path);
        if (!out) throw DataError("cannot write metrics file: " + *out_path);
        out << text;
    } else {
        std::cout << text;
    }
    return 0;
}

int cmd_bench(const std::vector<std::string>& config_paths, const std::string& queries_path,
              const std::optional<std::string>& qrels_path, const std::string& out_dir, int k) {
    auto queries = read_queries(queries_path);
    std::optional<Qrels> qrels;
    if (qrels_path) qrels = read_qrels(*qrels_path);
    fs::create_directories(out_dir);

    json results = json::array();
    std::cout << std::left << std::setw(24) << "config" << std::right << std::setw(12)
              << "mean_tokens" << std::setw(12) << "llm(s)" << std::setw(14) << "retrieval(s)"
              << std::setw(10) << "wall(s)";
    if (qrels) std::cout << std::setw(12) << ("nDCG@" + std::to_string(k));
    std::cout << "\n";

    for (const auto& path : config_paths) {
        PipelineConfig cfg = PipelineConfig::load_file(path);
        cfg.validate();
        Pipeline pipeline = Pipeline::build(cfg);
        std::string name = fs::path(path).stem().string();
        auto result = measure([&](const Query& q) { return pipeline.run(q); }, queries, name);
        for (const auto& failure : result.failed_queries)
            std::cerr << "[" << name << "] query failed: " << failure << "\n";
        std::string run_path = (fs::path(out_dir) / (name + ".run.txt")).string();
        write_run(run_path, result.run);
        std::ofstream cost_out((fs::path(out_dir) / (name + ".cost.txt")).string());
        cost_out << result.report.format_table();

        json row = {{"config", name},
                    {"config_path", path},
                    {"run_file", run_path},
                    {"queries", result.report.per_query.size()},
                    {"mean_tokens", result.report.mean_tokens},
                    {"mean_llm_seconds", result.report.mean_llm_seconds},
                    {"mean_retrieval_seconds", result.report.mean_retrieval_seconds},
                    {"mean_wall_seconds", result.report.mean_wall_seconds},
                    {"cost_report", result.report.to_json()},
                    {"effective_config", cfg.to_json()}};
        std::cout << std::left << std::setw(24) << name << std::right << std::fixed
                  << std::setprecision(1) << std::setw(12) << result.report.mean_tokens
                  << std::setprecision(4) << std::setw(12) << result.report.mean_llm_seconds
                  << std::setw(14) << result.report.mean_retrieval_seconds << std::setw(10)
                  << result.report.mean_wall_seconds;
        if (qrels) {
            auto ndcg = ndcg_at_k(result.run, *qrels, k);
            row["mean_ndcg"] = ndcg.mean;
            std::cout << std::setprecision(4) << std::setw(12) << ndcg.mean;
        }
        std::cout << "\n";
        results.push_back(std::move(row));
    }
    json report = {{"k", k}, {"results", std::move(results)}};
    std::string report_path = (fs::path(out_dir) / "bench.json").string();
    std::ofstream out(report_path);
    if (!out) throw DataError("cannot write bench report: " + report_path);
    out << report.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CTQE retrieval engine: candidate-token query expansion"};
    app.require_subcommand(1);

    // index
    auto* index_cmd = app.add_subcommand("index", "build word and subword indexes from JSONL");
    std::string corpus_path, out_word = "word.index.json", out_subword = "subword.index.json";
    std::optional<std::string> index_vocab;
    index_cmd->add_option("--corpus", corpus_path, "JSONL corpus")->required();
    index_cmd->add_option("--out-word", out_word);
    index_cmd->add_option("--out-subword", out_subword);
    index_cmd->add_option("--vocab", index_vocab, "subword vocab file");

    // expand
    auto* expand_cmd = app.add_subcommand("expand", "generate keywords + candidate tokens");
    std::optional<std::string> ex_query, ex_queries, ex_config;
    std::string ex_out = "expansion.json";
    ConfigOverrides ex_ov;
    expand_cmd->add_option("--query", ex_query, "single query text");
    expand_cmd->add_option("--queries", ex_queries, "query file (qid<TAB>text per line)");
    expand_cmd->add_option("--out", ex_out, "expansion artifact file");
    add_config_flags(expand_cmd, ex_config, ex_ov);

    // search
    auto* search_cmd = app.add_subcommand("search", "rank documents, write a TREC run file");
    std::optional<std::string> se_query, se_queries, se_config, se_expansion;
    std::string se_out = "run.txt", se_tag = "ctqe";
    ConfigOverrides se_ov;
    search_cmd->add_option("--query", se_query);
    search_cmd->add_option("--queries", se_queries);
    search_cmd->add_option("--expansion", se_expansion,
                           "reuse an expansion artifact file instead of generating");
    search_cmd->add_option("--out", se_out, "run file path");
    search_cmd->add_option("--tag", se_tag, "run tag");
    add_config_flags(search_cmd, se_config, se_ov);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "nDCG@k over a run file and qrels");
    std::string ev_run, ev_qrels;
    int ev_k = 10;
    std::optional<std::string> ev_out;
    eval_cmd->add_option("--run", ev_run)->required();
    eval_cmd->add_option("--qrels", ev_qrels)->required();
    eval_cmd->add_option("--k", ev_k)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--out", ev_out, "write metrics JSON here instead of stdout");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "cost/quality comparison across configs");
    std::vector<std::string> be_configs;
    std::string be_queries, be_out_dir = "bench_out";
    std::optional<std::string> be_qrels;
    int be_k = 10;
    bench_cmd->add_option("--configs", be_configs, "config files, one per pipeline")
        ->required()
        ->expected(-1);
    bench_cmd->add_option("--queries", be_queries)->required();
    bench_cmd->add_option("--qrels", be_qrels);
    bench_cmd->add_option("--out-dir", be_out_dir);
    bench_cmd->add_option("--k", be_k)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (index_cmd->parsed())
            return cmd_index(corpus_path, out_word, out_subword, index_vocab);
        if (expand_cmd->parsed()) {
            auto cfg = effective_config(ex_config, ex_ov);
            return cmd_expand(cfg, gather_queries(ex_query, ex_queries), ex_out);
        }
        if (search_cmd->parsed()) {
            auto cfg = effective_config(se_config, se_ov);
            return cmd_search(cfg, se_query, se_queries, se_expansion, se_out, se_tag);
        }
        if (eval_cmd->parsed()) return cmd_eval(ev_run, ev_qrels, ev_k, ev_out);
        if (bench_cmd->parsed()) return cmd_bench(be_configs, be_queries, be_qrels, be_out_dir, be_k);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ProviderError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
