#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chiq/bm25.hpp"
#include "chiq/config.hpp"
#include "chiq/corpus.hpp"
#include "chiq/dense.hpp"
#include "chiq/enhance.hpp"
#include "chiq/fusion.hpp"
#include "chiq/llm_gateway.hpp"
#include "chiq/metrics.hpp"
#include "chiq/parallel.hpp"
#include "chiq/retriever.hpp"
#include "chiq/rewrite.hpp"
#include "chiq/supervision.hpp"

namespace chiq::cli {

// ---------------------------------------------------------------------------
// Component factories driven by a resolved PipelineConfig

inline std::unique_ptr<llm::Gateway> make_gateway(const config::PipelineConfig& cfg) {
    llm::GatewayOptions options;
    options.retry.max_retries = cfg.gateway.max_retries;
    options.retry.base_delay = std::chrono::milliseconds(cfg.gateway.backoff_ms);
    options.max_in_flight = cfg.gateway.max_in_flight;
    if (!cfg.gateway.cache_dir.empty()) options.cache_dir = cfg.gateway.cache_dir;

    if (cfg.gateway.url.empty()) {
        auto gateway = std::make_unique<llm::Gateway>(std::make_shared<llm::MockBackend>(), options);
        if (!cfg.gateway.mock_rules.empty()) gateway->register_mock(llm::load_mock_rules(cfg.gateway.mock_rules));
        return gateway;
    }
    if (!cfg.gateway.mock_rules.empty()) {
        throw Error(ErrorKind::config, "mock rules cannot be combined with a gateway URL");
    }
    llm::HttpSettings http{cfg.gateway.url, cfg.gateway.api_key, std::chrono::seconds(cfg.gateway.timeout_s)};
    return std::make_unique<llm::Gateway>(std::make_shared<llm::HttpChatBackend>(http, cfg.gateway.model), options);
}

inline std::unique_ptr<EmbeddingClient> make_embedder(const config::PipelineConfig& cfg) {
    std::shared_ptr<EmbeddingBackend> backend;
    if (cfg.embedding.url.empty()) {
        backend = std::make_shared<HashEmbedder>(cfg.embedding.dimension, cfg.analyzer);
    } else {
        backend = std::make_shared<HttpEmbedder>(
            llm::HttpSettings{cfg.embedding.url, cfg.gateway.api_key, std::chrono::seconds(cfg.gateway.timeout_s)});
    }
    std::optional<std::filesystem::path> cache;
    if (!cfg.gateway.cache_dir.empty()) cache = cfg.gateway.cache_dir;
    llm::RetryPolicy retry;
    retry.max_retries = cfg.gateway.max_retries;
    retry.base_delay = std::chrono::milliseconds(cfg.gateway.backoff_ms);
    return std::make_unique<EmbeddingClient>(backend, cache, retry);
}

/// The sparse index plus, for dense configurations, the vectors and encoder
/// client that go with it.
struct LoadedIndex {
    InvertedIndex sparse;
    std::optional<VectorIndex> dense;
    std::unique_ptr<EmbeddingClient> embedder;
    std::unique_ptr<Retriever> retriever;
};

inline std::unique_ptr<LoadedIndex> load_index(const std::filesystem::path& dir, const config::PipelineConfig& cfg) {
    auto loaded = std::make_unique<LoadedIndex>();
    loaded->sparse = InvertedIndex::load(dir);
    if (cfg.retriever == "dense") {
        if (!std::filesystem::exists(dir / "vectors.bin")) {
            throw Error(ErrorKind::config, "dense retriever selected but " + dir.string() + " has no vectors.bin");
        }
        loaded->dense = VectorIndex::load(dir / "vectors.bin");
        loaded->embedder = make_embedder(cfg);
        loaded->retriever =
            std::make_unique<DenseRetriever>(*loaded->dense, *loaded->embedder, cfg.truncation.query);
    } else {
        loaded->retriever = std::make_unique<SparseRetriever>(loaded->sparse, cfg.bm25, cfg.truncation.query);
    }
    return loaded;
}

inline enhance::EnhanceConfig enhance_config(const config::PipelineConfig& cfg, const enhance::Steps& steps = {}) {
    enhance::EnhanceConfig e;
    e.steps = steps;
    e.temperature = cfg.temperature;
    e.seed = cfg.seed;
    return e;
}

inline rewrite::RewriteConfig rewrite_config(const config::PipelineConfig& cfg, const std::string& label) {
    rewrite::RewriteConfig r;
    r.configuration = rewrite::Configuration::parse(label);
    r.temperature = cfg.temperature;
    r.seed = cfg.seed;
    r.query_token_limit = cfg.truncation.query;
    r.input_token_limit = cfg.truncation.input;
    return r;
}

inline std::map<std::string, enhance::EnhancedHistory> index_by_turn(std::vector<enhance::EnhancedHistory> records) {
    std::map<std::string, enhance::EnhancedHistory> out;
    for (auto& r : records) {
        auto id = r.turn_id;
        if (!out.emplace(id, std::move(r)).second) {
            throw Error(ErrorKind::duplicate, "duplicate turn_id " + id + " in enhancement dump");
        }
    }
    return out;
}

inline std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::replace(s.begin(), s.end(), '\r', ' ');
    return s;
}

inline void report_gateway(const llm::Gateway& gateway, std::ostream& err) {
    const auto log = gateway.call_log();
    const auto cached = std::count_if(log.begin(), log.end(), [](const llm::CallRecord& r) { return r.cached; });
    err << "gateway " << gateway.backend_id() << ": " << log.size() << " calls, " << cached << " cached\n";
    if (gateway.unmatched_count() > 0) {
        err << "warning: " << gateway.unmatched_count() << " prompt(s) matched no mock rule\n";
    }
}

// ---------------------------------------------------------------------------
// Subcommands

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::istream& in;
    config::EnvLookup env;
    nlohmann::json flags = nlohmann::json::object();
    std::string config_file;

    config::PipelineConfig resolve() const {
        const auto file = config_file.empty() ? nlohmann::json() : config::read_file(config_file);
        return config::resolve(flags, file, config::env_layer(env));
    }
};

inline void add_config_flags(CLI::App* sub, Context& ctx) {
    auto set = [&ctx](std::initializer_list<const char*> path) {
        return [&ctx, keys = std::vector<std::string>(path.begin(), path.end())](const auto& value) {
            nlohmann::json* node = &ctx.flags;
            for (std::size_t i = 0; i + 1 < keys.size(); ++i) node = &(*node)[keys[i]];
            (*node)[keys.back()] = value;
        };
    };
    std::vector<std::string> presets(config::kPresets.begin(), config::kPresets.end());
    sub->add_option("--config", ctx.config_file, "JSON config file (PipelineConfig schema)")->check(CLI::ExistingFile);
    sub->add_option_function<std::string>("--preset", set({"preset"}), "dataset preset")
        ->check(CLI::IsMember(presets));
    sub->add_option_function<std::int64_t>("--seed", set({"seed"}), "generation seed");
    sub->add_option_function<int>("--threads", set({"threads"}), "worker threads");
    sub->add_option_function<std::string>("--retriever", set({"retriever"}), "sparse or dense")
        ->check(CLI::IsMember({"sparse", "dense"}));
    sub->add_option_function<double>("--k1", set({"bm25", "k1"}), "BM25 k1");
    sub->add_option_function<double>("--b", set({"bm25", "b"}), "BM25 b");
    sub->add_option_function<double>("--temperature", set({"temperature"}), "sampling temperature");
    sub->add_option_function<std::string>("--llm-url", set({"gateway", "url"}), "chat endpoint URL");
    sub->add_option_function<std::string>("--llm-model", set({"gateway", "model"}), "chat model name");
    sub->add_option_function<std::string>("--llm-key", set({"gateway", "api_key"}), "bearer token");
    sub->add_option_function<std::string>("--cache-dir", set({"gateway", "cache_dir"}), "response cache directory");
    sub->add_option_function<std::string>("--mock-rules", set({"gateway", "mock_rules"}), "mock rules JSON")
        ->check(CLI::ExistingFile);
    sub->add_option_function<std::string>("--embed-url", set({"embedding", "url"}), "embedding endpoint URL");
    sub->add_option_function<std::size_t>("--embed-dim", set({"embedding", "dimension"}), "embedding dimension");
    sub->add_option_function<std::string>("--similarity", set({"embedding", "similarity"}), "dot or cosine")
        ->check(CLI::IsMember({"dot", "cosine"}));
    sub->add_option_function<std::string>("--stemmer", set({"analyzer", "stemmer"}), "porter or none")
        ->check(CLI::IsMember({"porter", "none"}));
    sub->add_option_function<std::string>("--stopwords", set({"analyzer", "stopwords"}), "english or none")
        ->check(CLI::IsMember({"english", "none"}));
}

inline int cmd_index(Context& ctx, const std::string& collection, const std::string& out_dir,
                     const std::string& format) {
    const auto cfg = ctx.resolve();
    const auto passages = format.empty()
                              ? load_collection(collection)
                              : load_collection(collection, format == "tsv" ? CollectionFormat::tsv
                                                                            : CollectionFormat::jsonl);
    const auto index = InvertedIndex::build(passages, cfg.analyzer, cfg.truncation.passage);
    nlohmann::json extra = nlohmann::json::object();
    if (cfg.retriever == "dense") {
        auto embedder = make_embedder(cfg);
        const auto vectors =
            build_vector_index(passages, *embedder, cfg.embedding.dimension, cfg.embedding.similarity,
                               cfg.truncation.passage);
        std::filesystem::create_directories(out_dir);
        vectors.save(std::filesystem::path(out_dir) / "vectors.bin");
        extra["dense"] = {{"dimension", cfg.embedding.dimension},
                          {"similarity", std::string(to_string(cfg.embedding.similarity))},
                          {"embedder", embedder->backend_id()}};
    }
    index.save(out_dir, extra);
    ctx.out << "indexed " << index.size() << " passages, " << index.vocabulary_size() << " terms -> " << out_dir
            << "\n";
    return 0;
}

inline int cmd_enhance(Context& ctx, const std::string& sessions_path, const std::string& out_path,
                       const std::vector<std::string>& skip) {
    const auto cfg = ctx.resolve();
    enhance::Steps steps;
    for (const auto& s : skip) {
        if (s == "QD") steps.qd = false;
        else if (s == "RE") steps.re = false;
        else if (s == "PR") steps.pr = false;
        else if (s == "TS") steps.ts = false;
        else if (s == "HS") steps.hs = false;
        else throw Error(ErrorKind::config, "unknown enhancement step '" + s + "'");
    }
    const auto sessions = load_sessions(sessions_path);
    auto gateway = make_gateway(cfg);
    const auto ecfg = enhance_config(cfg, steps);
    auto records = parallel_map(sessions.size(), cfg.threads,
                                [&](std::size_t i) { return enhance::enhance_history(*gateway, sessions[i], ecfg); });
    enhance::write_dump(records, out_path);
    ctx.out << "enhanced " << records.size() << " turns -> " << out_path << "\n";
    report_gateway(*gateway, ctx.err);
    return 0;
}

inline int cmd_rewrite(Context& ctx, const std::string& sessions_path, const std::string& enhanced_path,
                       const std::string& label, bool no_fallback, const std::string& out_path) {
    const auto cfg = ctx.resolve();
    auto rcfg = rewrite_config(cfg, label);
    rcfg.fallback = !no_fallback;
    const auto sessions = load_sessions(sessions_path);
    std::map<std::string, enhance::EnhancedHistory> enhanced;
    if (!enhanced_path.empty()) enhanced = index_by_turn(enhance::read_dump(enhanced_path));
    if (rcfg.configuration.uses_enhancement() && enhanced_path.empty()) {
        throw Error(ErrorKind::config, "configuration " + rcfg.configuration.label() + " needs --enhanced");
    }
    auto gateway = make_gateway(cfg);
    auto queries = parallel_map(sessions.size(), cfg.threads, [&](std::size_t i) {
        const auto it = enhanced.find(sessions[i].turn_id);
        const auto* e = it == enhanced.end() ? nullptr : &it->second;
        if (rcfg.configuration.uses_enhancement() && !e) {
            throw Error(ErrorKind::validation, "no enhancement record for turn " + sessions[i].turn_id);
        }
        return rewrite::rewrite_query(*gateway, sessions[i], e, rcfg);
    });
    rewrite::write_dump(queries, out_path);
    const auto fallbacks = std::count_if(queries.begin(), queries.end(), [](const rewrite::RewrittenQuery& q) {
        return q.source == rewrite::QuerySource::fallback;
    });
    ctx.out << "rewrote " << queries.size() << " turns (" << fallbacks << " fallback) -> " << out_path << "\n";
    report_gateway(*gateway, ctx.err);
    return 0;
}

inline int cmd_retrieve(Context& ctx, const std::string& index_dir, const std::string& queries_path,
                        const std::string& sessions_path, std::optional<std::size_t> k, const std::string& tag,
                        const std::string& out_path) {
    const auto cfg = ctx.resolve();
    std::vector<std::pair<std::string, std::string>> queries;
    if (!queries_path.empty()) {
        for (auto& q : rewrite::read_dump(queries_path)) queries.emplace_back(q.turn_id, q.text);
    } else {
        for (auto& s : load_sessions(sessions_path)) queries.emplace_back(s.turn_id, s.current_question);
    }
    std::set<std::string> seen;
    for (const auto& [qid, _] : queries) {
        if (!seen.insert(qid).second) throw Error(ErrorKind::duplicate, "duplicate query id " + qid);
    }
    const auto loaded = load_index(index_dir, cfg);
    const auto depth = k.value_or(cfg.retrieval_depth);
    auto lists = parallel_map(queries.size(), cfg.threads, [&](std::size_t i) {
        return loaded->retriever->search(queries[i].first, queries[i].second, depth);
    });
    std::vector<RunEntry> run;
    for (const auto& list : lists) {
        auto entries = to_run_entries(list, tag);
        run.insert(run.end(), entries.begin(), entries.end());
    }
    write_run(run, std::filesystem::path(out_path));
    ctx.out << "retrieved " << lists.size() << " queries (" << cfg.retriever << ", depth " << depth << ") -> "
            << out_path << "\n";
    return 0;
}

inline int cmd_fuse(Context& ctx, const std::string& run_a, const std::string& run_b, std::optional<double> alpha,
                    std::optional<std::size_t> depth, const std::string& tag, const std::string& out_path) {
    const auto cfg = ctx.resolve();
    fusion::FusionConfig fcfg;
    fcfg.alpha = alpha.value_or(cfg.fusion_alpha);
    fcfg.depth = depth.value_or(cfg.fusion_depth);
    const auto a = group_run(read_run(run_a));
    const auto b = group_run(read_run(run_b));
    std::set<std::string> qids;
    for (const auto& [q, _] : a) qids.insert(q);
    for (const auto& [q, _] : b) qids.insert(q);
    std::vector<RunEntry> run;
    for (const auto& q : qids) {
        RankedList empty;
        empty.query_id = q;
        const auto& la = a.count(q) ? a.at(q) : empty;
        const auto& lb = b.count(q) ? b.at(q) : empty;
        auto fused = fusion::fuse(la, lb, fcfg);
        fused.query_id = q;
        auto entries = to_run_entries(fused, tag);
        run.insert(run.end(), entries.begin(), entries.end());
    }
    write_run(run, std::filesystem::path(out_path));
    ctx.out << "fused " << qids.size() << " queries (alpha " << fcfg.alpha << ") -> " << out_path << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string run;
    std::string qrels;
    std::optional<int> threshold;
    std::optional<std::size_t> ndcg_k;
    std::optional<std::size_t> recall_k;
    std::optional<std::size_t> mrr_depth;
    std::string gain;
    std::string json_out;
};

inline int cmd_evaluate(Context& ctx, const EvaluateArgs& args) {
    const auto cfg = ctx.resolve();
    const int threshold = args.threshold.value_or(cfg.threshold);
    auto ecfg = cfg.eval;
    if (args.ndcg_k) ecfg.ndcg_cutoff = *args.ndcg_k;
    if (args.recall_k) ecfg.recall_cutoff = *args.recall_k;
    if (args.mrr_depth) ecfg.mrr_depth = *args.mrr_depth;
    if (!args.gain.empty()) ecfg.gain = args.gain == "linear" ? metrics::Gain::linear : metrics::Gain::exponential;
    const auto qrels = load_qrels(args.qrels, threshold);
    const auto report = metrics::evaluate_run(read_run(args.run), qrels, ecfg);
    ctx.out << metrics::format_table(report, ecfg);
    if (!report.unjudged_queries.empty()) {
        ctx.err << "warning: " << report.unjudged_queries.size() << " run quer(ies) have no judgments\n";
    }
    if (report.judged_queries_missing_from_run) {
        ctx.err << "warning: " << report.judged_queries_missing_from_run << " judged quer(ies) missing from run\n";
    }
    if (!args.json_out.empty()) {
        std::ofstream out(args.json_out, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::io, "cannot write " + args.json_out);
        out << metrics::to_json(report, ecfg, threshold).dump(2) << '\n';
    }
    return 0;
}

struct SuperviseArgs {
    std::string sessions;
    std::string enhanced;
    std::string index;
    std::string qrels;
    std::size_t m = 5;
    std::string history = "original";
    std::string ablate = "none";
    std::size_t depth = 10;
    std::string out;
};

inline int cmd_supervise(Context& ctx, const SuperviseArgs& args) {
    const auto cfg = ctx.resolve();
    supervision::SupervisionConfig scfg;
    scfg.m = args.m;
    scfg.ablation = supervision::ablation_from_string(args.ablate);
    scfg.input_history =
        args.history == "enhanced" ? supervision::HistoryInput::enhanced : supervision::HistoryInput::original;
    scfg.search_depth = args.depth;
    scfg.temperature = cfg.temperature;
    scfg.seed = cfg.seed;
    scfg.threads = cfg.threads;
    scfg.query_token_limit = cfg.truncation.query;
    scfg.input_token_limit = cfg.truncation.input;
    scfg.passage_token_limit = cfg.truncation.passage;

    const auto sessions = load_sessions(args.sessions);
    std::map<std::string, enhance::EnhancedHistory> enhanced;
    if (!args.enhanced.empty()) enhanced = index_by_turn(enhance::read_dump(args.enhanced));
    const auto qrels = load_qrels(args.qrels, cfg.threshold);
    const auto loaded = load_index(args.index, cfg);
    auto gateway = make_gateway(cfg);
    const auto dataset = supervision::build_ft_dataset(*gateway, sessions, enhanced, loaded->sparse,
                                                       *loaded->retriever, qrels, scfg, enhance_config(cfg));
    supervision::write_dataset(dataset.records, args.out);
    const auto& s = dataset.stats;
    ctx.out << "supervised " << s.records << " of " << s.turns << " turns -> " << args.out << "\n";
    ctx.err << "skipped (no gold): " << s.skipped_no_gold << ", zero-signal: " << s.zero_signal
            << ", list fallbacks: " << s.candidate_fallbacks << ", enhanced on the fly: " << s.enhanced_on_the_fly
            << "\n";
    report_gateway(*gateway, ctx.err);
    return 0;
}

inline std::string snippet(const std::string& text, std::size_t tokens = 12) {
    auto head = text::keep_head_tokens(text, tokens);
    std::replace(head.begin(), head.end(), '\n', ' ');
    return head.size() < text.size() ? head + " ..." : head;
}

/// Line-oriented session explorer. A plain line is the next question;
/// ":answer TEXT" replaces the recorded response of the last turn,
/// ":reset" starts a new conversation, ":quit" leaves.
inline int cmd_repl(Context& ctx, const std::string& index_dir, const std::string& label) {
    const auto cfg = ctx.resolve();
    const auto loaded = load_index(index_dir, cfg);
    auto gateway = make_gateway(cfg);
    const auto ecfg = enhance_config(cfg);
    const auto rcfg = rewrite_config(cfg, label);
    auto& out = ctx.out;

    ConversationSession session;
    session.session_id = "repl";
    std::size_t counter = 0;
    out << "chiq repl: " << loaded->sparse.size() << " passages, " << gateway->backend_id() << ", configuration "
        << rcfg.configuration.label() << "\n";
    std::string line;
    while (out << "> " << std::flush, std::getline(ctx.in, line)) {
        const auto input = std::string(text::trim(line));
        if (input.empty()) continue;
        if (input == ":quit" || input == ":q") break;
        if (input == ":reset") {
            session.turns.clear();
            out << "history cleared\n";
            continue;
        }
        if (input == ":history") {
            for (std::size_t i = 0; i < session.turns.size(); ++i) {
                out << "  " << i + 1 << ". Q: " << session.turns[i].question << "\n     A: "
                    << snippet(session.turns[i].response, 24) << "\n";
            }
            continue;
        }
        if (input.starts_with(":answer")) {
            if (session.turns.empty()) {
                out << "no turn to answer yet\n";
            } else {
                session.turns.back().response = std::string(text::trim(input.substr(7)));
            }
            continue;
        }
        if (input.front() == ':') {
            out << "commands: :answer TEXT, :history, :reset, :quit\n";
            continue;
        }

        session.turn_id = "repl_" + std::to_string(++counter);
        session.current_question = input;
        try {
            const auto e = enhance::enhance_history(*gateway, session, ecfg);
            out << "  topic switch: " << (e.topic_switched ? "yes" : "no") << "\n";
            if (e.disambiguated_question != input) out << "  QD: " << e.disambiguated_question << "\n";
            if (e.expanded_last_response) out << "  RE: " << snippet(*e.expanded_last_response, 24) << "\n";
            if (e.pseudo_response) out << "  PR: " << snippet(*e.pseudo_response, 24) << "\n";
            if (e.summary) out << "  HS: " << snippet(*e.summary, 24) << "\n";
            const auto q = rewrite::rewrite_query(*gateway, session, &e, rcfg);
            out << "  query (" << rewrite::to_string(q.source) << "): " << q.text << "\n";
            const auto hits = loaded->retriever->search(session.turn_id, q.text, 5);
            for (std::size_t i = 0; i < hits.hits.size(); ++i) {
                const auto& h = hits.hits[i];
                const auto passage = loaded->sparse.passage(h.doc_id);
                char score[32];
                std::snprintf(score, sizeof score, "%.4f", h.score);
                out << "  " << i + 1 << ". " << h.doc_id << " " << score << "  "
                    << (passage ? snippet(passage->text) : std::string()) << "\n";
            }
            std::string response = "(no answer)";
            if (!hits.hits.empty()) {
                if (auto p = loaded->sparse.passage(hits.hits.front().doc_id)) response = text::keep_head_tokens(p->text, 48);
            }
            session.turns.push_back({input, response});
        } catch (const Error& e) {
            out << "error: " << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Entry point

/// Parses args (without the program name) and runs one subcommand. Failures
/// print a single "error: <kind>: <message>" line to err.
inline int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                       std::istream& in = std::cin, config::EnvLookup env = config::process_env) {
    Context ctx{out, err, in, std::move(env), nlohmann::json::object(), {}};
    CLI::App app{"Conversational search toolkit: history enhancement, query rewriting, retrieval, evaluation",
                 "chiq"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    auto* index = app.add_subcommand("index", "Build an inverted index (and vectors for dense retrieval)");
    std::string collection, index_out, format;
    index->add_option("--collection", collection, "TSV or JSONL collection")->required()->check(CLI::ExistingFile);
    index->add_option("--out", index_out, "index directory")->required();
    index->add_option("--format", format, "collection format")->check(CLI::IsMember({"tsv", "jsonl"}));

    auto* enh = app.add_subcommand("enhance", "Run the history enhancement steps over sessions");
    std::string sessions, enhanced, enh_out;
    std::vector<std::string> skip;
    enh->add_option("--sessions", sessions, "sessions JSONL")->required()->check(CLI::ExistingFile);
    enh->add_option("--out", enh_out, "enhancement dump")->required();
    enh->add_option("--skip", skip, "steps to leave out (QD RE PR TS HS)")->delimiter(',');

    auto* rw = app.add_subcommand("rewrite", "Rewrite each turn into a standalone query");
    std::string label = "default", rw_out;
    bool no_fallback = false;
    rw->add_option("--sessions", sessions, "sessions JSONL")->required()->check(CLI::ExistingFile);
    rw->add_option("--enhanced", enhanced, "enhancement dump")->check(CLI::ExistingFile);
    rw->add_option("--configuration", label, "original, default, or e.g. QD+RE+PR");
    rw->add_flag("--no-fallback", no_fallback, "fail instead of falling back when the model call fails");
    rw->add_option("--out", rw_out, "rewrite dump")->required();

    auto* ret = app.add_subcommand("retrieve", "Search an index with rewritten queries");
    std::string index_dir, queries, run_out, tag = "chiq";
    std::optional<std::size_t> k;
    ret->add_option("--index", index_dir, "index directory")->required()->check(CLI::ExistingDirectory);
    auto* q_opt = ret->add_option("--queries", queries, "rewrite dump")->check(CLI::ExistingFile);
    auto* s_opt = ret->add_option("--sessions", sessions, "sessions JSONL (raw questions)")->check(CLI::ExistingFile);
    q_opt->excludes(s_opt);
    ret->add_option("--k", k, "retrieval depth");
    ret->add_option("--tag", tag, "run tag");
    ret->add_option("--out", run_out, "TREC run file")->required();

    auto* fu = app.add_subcommand("fuse", "Fuse two TREC runs by weighted min-max CombSUM");
    std::string run_a, run_b, fuse_out, fuse_tag = "fused";
    std::optional<double> alpha;
    std::optional<std::size_t> fuse_depth;
    fu->add_option("--run-a", run_a, "first run")->required()->check(CLI::ExistingFile);
    fu->add_option("--run-b", run_b, "second run, weighted by alpha")->required()->check(CLI::ExistingFile);
    fu->add_option("--alpha", alpha, "weight of the second run");
    fu->add_option("--depth", fuse_depth, "output depth");
    fu->add_option("--tag", fuse_tag, "run tag");
    fu->add_option("--out", fuse_out, "fused run")->required();

    auto* ev = app.add_subcommand("evaluate", "Score a TREC run against qrels");
    EvaluateArgs eval;
    ev->add_option("--run", eval.run, "TREC run")->required()->check(CLI::ExistingFile);
    ev->add_option("--qrels", eval.qrels, "TREC qrels")->required()->check(CLI::ExistingFile);
    ev->add_option("--threshold", eval.threshold, "relevance threshold (default from preset)");
    ev->add_option("--ndcg-k", eval.ndcg_k, "NDCG cutoff");
    ev->add_option("--recall-k", eval.recall_k, "recall cutoff");
    ev->add_option("--mrr-depth", eval.mrr_depth, "MRR depth, 0 for the full run");
    ev->add_option("--gain", eval.gain, "NDCG gain")->check(CLI::IsMember({"exponential", "linear"}));
    ev->add_option("--json-out", eval.json_out, "metrics JSON");

    auto* sup = app.add_subcommand("supervise", "Generate pseudo-supervised rewrites for fine-tuning");
    SuperviseArgs sv;
    sup->add_option("--sessions", sv.sessions, "sessions JSONL")->required()->check(CLI::ExistingFile);
    sup->add_option("--enhanced", sv.enhanced, "enhancement dump")->check(CLI::ExistingFile);
    sup->add_option("--index", sv.index, "index directory")->required()->check(CLI::ExistingDirectory);
    sup->add_option("--qrels", sv.qrels, "TREC qrels")->required()->check(CLI::ExistingFile);
    sup->add_option("--m", sv.m, "candidates per turn")->check(CLI::PositiveNumber);
    sup->add_option("--history", sv.history, "history in the training input")
        ->check(CLI::IsMember({"original", "enhanced"}));
    sup->add_option("--ablate", sv.ablate, "ablation")
        ->check(CLI::IsMember({"none", "no-hprime", "no-multi", "no-gold"}));
    sup->add_option("--depth", sv.depth, "search depth for candidate scoring")->check(CLI::PositiveNumber);
    sup->add_option("--out", sv.out, "FtRecord JSONL")->required();

    auto* repl = app.add_subcommand("repl", "Interactive session explorer");
    repl->add_option("--index", index_dir, "index directory")->required()->check(CLI::ExistingDirectory);
    repl->add_option("--configuration", label, "rewrite configuration");

    auto* dump = app.add_subcommand("config-dump", "Print the effective configuration as JSON");

    for (auto* sub : {index, enh, rw, ret, fu, ev, sup, repl, dump}) add_config_flags(sub, ctx);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        // Help requested on a subcommand surfaces as CallForHelp above; anything
        // else is a usage error.
        err << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (*index) return cmd_index(ctx, collection, index_out, format);
        if (*enh) return cmd_enhance(ctx, sessions, enh_out, skip);
        if (*rw) return cmd_rewrite(ctx, sessions, enhanced, label, no_fallback, rw_out);
        if (*ret) {
            if (queries.empty() && sessions.empty()) {
                throw Error(ErrorKind::config, "retrieve needs --queries or --sessions");
            }
            return cmd_retrieve(ctx, index_dir, queries, sessions, k, tag, run_out);
        }
        if (*fu) return cmd_fuse(ctx, run_a, run_b, alpha, fuse_depth, fuse_tag, fuse_out);
        if (*ev) return cmd_evaluate(ctx, eval);
        if (*sup) return cmd_supervise(ctx, sv);
        if (*repl) return cmd_repl(ctx, index_dir, label);
        if (*dump) {
            out << config::to_json(ctx.resolve()).dump(2) << "\n";
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: parse: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: io: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 2;
}

}  // namespace chiq::cli
