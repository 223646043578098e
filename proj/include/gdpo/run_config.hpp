#pragma once

// Experiment configuration for the command-line tool: one JSON document with
// data, model, sft, align and eval sections.

#include <filesystem>
#include <string>
#include <string_view>

#include "gdpo/align.hpp"
#include "gdpo/datagen.hpp"
#include "gdpo/evalkit.hpp"
#include "gdpo/policy.hpp"
#include "gdpo/train.hpp"

namespace gdpo {

struct ModelConfig {
    Backend backend = Backend::tabular;
    int window = 8;
    std::size_t context_length = 64;
    NeuralConfig neural;
};

struct RunConfig {
    DatasetManifest data;
    ModelConfig model;
    TrainConfig sft;
    TrainConfig align;
    GenerationOptions eval;

    void validate() const;
};

// Defaults for every key; learning rates default to 1e-2 (tabular) or 1e-3
// (neural) unless given.
RunConfig default_run_config();

// Parses a config document after applying overrides (a JSON merge patch).
// Unknown keys and ill-typed values raise ConfigError naming the field.
RunConfig parse_run_config(std::string_view text, std::string_view overrides = "{}");
RunConfig load_run_config(const std::filesystem::path& path, std::string_view overrides = "{}");

// Canonical JSON with every field spelled out.
std::string to_json_text(const RunConfig& config);

// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const RunConfig& config);

// Fresh policy for the configured backend over the topics.
Policy make_policy(const ModelConfig& model, std::span<const Topic> topics);

}  // namespace gdpo
