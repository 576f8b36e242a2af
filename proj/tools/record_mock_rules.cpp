// Turns a per-turn script of model outputs into exact (hash) mock rules.
//
// The pipeline is run for real against a backend that answers from the
// script, so every recorded prompt is byte-identical to what enhance,
// rewrite and supervise will later send. Script layout:
//
//   {"turns": {"<turn_id>": {"QD": "...", "RE": "...", "PR": "...",
//                            "TS": "...", "HS": "...",
//                            "CQR": {"default": "...", "original": "..."},
//                            "SUPERVISION": "1. ...\n2. ..."}}}

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chiq/chiq.hpp"

namespace {

class ScriptedBackend final : public chiq::llm::ChatBackend {
public:
    explicit ScriptedBackend(nlohmann::json script) : script_(std::move(script)) {}

    std::string id() const override { return "scripted"; }

    void set_turn(std::string turn, std::string configuration) {
        turn_ = std::move(turn);
        configuration_ = std::move(configuration);
    }

    std::string generate(const chiq::llm::ChatRequest& request) override {
        const auto kind = chiq::prompts::kind_of_instruction(request.system_instruction);
        if (!kind) throw chiq::Error(chiq::ErrorKind::config, "unrecognised instruction");
        const std::string key(chiq::prompts::to_string(*kind));
        const auto& turns = script_.at("turns");
        if (!turns.contains(turn_) || !turns[turn_].contains(key)) {
            throw chiq::Error(chiq::ErrorKind::config, "script has no " + key + " output for turn " + turn_);
        }
        auto entry = turns[turn_][key];
        if (entry.is_object()) {
            if (!entry.contains(configuration_)) {
                throw chiq::Error(chiq::ErrorKind::config,
                                  "script has no " + key + "/" + configuration_ + " output for turn " + turn_);
            }
            entry = entry[configuration_];
        }
        auto response = entry.get<std::string>();
        const auto digest = chiq::llm::prompt_hash(request);
        if (seen_.insert(digest).second) rules_.push_back({chiq::llm::MatchKind::hash, digest, response});
        return response;
    }

    const std::vector<chiq::llm::MockRule>& rules() const { return rules_; }

private:
    nlohmann::json script_;
    std::string turn_;
    std::string configuration_;
    std::set<std::string> seen_;
    std::vector<chiq::llm::MockRule> rules_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Record hash mock rules from a scripted pipeline run", "record_mock_rules"};
    std::string sessions_path, script_path, out_path, collection_path, qrels_path;
    std::vector<std::string> configurations{"default", "original"};
    app.add_option("--sessions", sessions_path)->required()->check(CLI::ExistingFile);
    app.add_option("--script", script_path)->required()->check(CLI::ExistingFile);
    app.add_option("--out", out_path)->required();
    app.add_option("--configurations", configurations)->delimiter(',');
    app.add_option("--collection", collection_path)->check(CLI::ExistingFile);
    app.add_option("--qrels", qrels_path)->check(CLI::ExistingFile);
    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream in(script_path);
        auto backend = std::make_shared<ScriptedBackend>(nlohmann::json::parse(in));
        chiq::llm::GatewayOptions options;
        options.max_in_flight = 1;
        chiq::llm::Gateway gateway(backend, options);

        const auto sessions = chiq::load_sessions(sessions_path);
        chiq::enhance::EnhanceConfig enhance_cfg;
        enhance_cfg.fallback = false;
        std::map<std::string, chiq::enhance::EnhancedHistory> enhanced;
        for (const auto& session : sessions) {
            backend->set_turn(session.turn_id, "");
            enhanced.emplace(session.turn_id, chiq::enhance::enhance_history(gateway, session, enhance_cfg));
        }
        for (const auto& label : configurations) {
            chiq::rewrite::RewriteConfig cfg;
            cfg.configuration = chiq::rewrite::Configuration::parse(label);
            cfg.fallback = false;
            for (const auto& session : sessions) {
                backend->set_turn(session.turn_id, label);
                chiq::rewrite::rewrite_query(gateway, session, &enhanced.at(session.turn_id), cfg);
            }
        }

        if (!collection_path.empty() && !qrels_path.empty()) {
            const auto index = chiq::InvertedIndex::build(chiq::load_collection(collection_path));
            const auto qrels = chiq::load_qrels(qrels_path, 1);
            using chiq::supervision::Ablation;
            for (auto ablation : {Ablation::none, Ablation::no_hprime, Ablation::no_gold}) {
                chiq::supervision::SupervisionConfig cfg;
                cfg.ablation = ablation;
                for (const auto& session : sessions) {
                    const auto gold_id = qrels.best_relevant(session.query_id());
                    const auto gold = gold_id ? index.passage(*gold_id) : std::nullopt;
                    if (!gold) continue;
                    backend->set_turn(session.turn_id, "");
                    chiq::supervision::generate_candidates(gateway, session, &enhanced.at(session.turn_id), &*gold,
                                                           cfg);
                }
            }
        }

        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        out << chiq::llm::to_json(backend->rules()).dump(2) << '\n';
        std::cout << backend->rules().size() << " rules -> " << out_path << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
