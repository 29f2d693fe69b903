#pragma once

// INI experiment configuration:
//
//   [data]    train_corpus test_corpus min_freq max_vocab max_train_sentences
//             max_test_sentences val_sentences
//   [model]   max_len embed feature symbols_per_token layers heads ffn
//   [channel] ris_elements train_snr_db
//   [train]   optimizer learning_rate momentum clip_norm adam_beta1 adam_beta2
//             epochs batch_size
//   [eval]    variants snr_db epsilon seeds batch_size
//   [run]     master_seed output_dir
//
// Lists are comma separated. Relative paths resolve against the directory of
// the config file. Any other section or key is an error.

#include <filesystem>
#include <string>

#include "rissc/harness.hpp"

namespace rissc::config {

harness::ExperimentConfig parse(const std::string& text, const std::filesystem::path& base_dir);
harness::ExperimentConfig load(const std::filesystem::path& path);  // IoError when unreadable

// Corpora readable and the output directory usable; throws IoError.
void check_paths(const harness::ExperimentConfig& cfg);

// Every key with its effective value, in the layout above.
std::string render(const harness::ExperimentConfig& cfg);

}  // namespace rissc::config
