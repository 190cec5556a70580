// pedalcw: MIDI <-> pedal-aware compound-word tokens, corpus statistics,
// and a small decoder-only generator (train / generate).
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.
// Diagnostics go to stderr; PEDALCW_LOG={error,info,debug} controls noise.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pedalcw/pedalcw.hpp"

namespace fs = std::filesystem;

namespace {

enum class LogLevel { error = 0, info = 1, debug = 2 };
LogLevel g_log_level = LogLevel::error;

void init_log_level() {
  const char* env = std::getenv("PEDALCW_LOG");
  if (!env) return;
  std::string v = env;
  if (v == "info") g_log_level = LogLevel::info;
  if (v == "debug") g_log_level = LogLevel::debug;
}

void log_info(const std::string& msg) {
  if (g_log_level >= LogLevel::info) std::cerr << "pedalcw: " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (g_log_level >= LogLevel::debug) std::cerr << "pedalcw: " << msg << "\n";
}

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  auto bytes = read_binary(path);
  return {bytes.begin(), bytes.end()};
}

// All output goes through a temp file plus rename so failures leave nothing
// half-written behind.
void write_atomic(const fs::path& path, const void* data, std::size_t size) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(static_cast<const char*>(data), std::streamsize(size));
    if (!out) throw IoError("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
  log_debug("wrote " + path.string() + " (" + std::to_string(size) + " bytes)");
}

void write_atomic(const fs::path& path, const std::string& text) {
  write_atomic(path, text.data(), text.size());
}

void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  write_atomic(path, bytes.data(), bytes.size());
}

std::uint64_t resolve_seed(bool given, std::uint64_t value) {
  if (given) return value;
  std::random_device entropy;
  std::uint64_t seed = (std::uint64_t(entropy()) << 32) | entropy();
  std::cerr << "pedalcw: seed = " << seed << "\n";
  return seed;
}

std::vector<fs::path> list_files(const fs::path& dir,
                                 const std::vector<std::string>& extensions) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    for (char& c : ext) c = char(std::tolower(c));
    for (const std::string& want : extensions) {
      if (ext == want) {
        files.push_back(entry.path());
        break;
      }
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::array<double, pedalcw::kFieldCount> parse_per_field(const std::string& text,
                                                         const char* flag) {
  std::array<double, pedalcw::kFieldCount> out;
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    std::string part = text.substr(start, comma == std::string::npos ? comma : comma - start);
    try {
      values.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected a number or 7 comma-separated numbers");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (values.size() == 1) {
    out.fill(values[0]);
  } else if (values.size() == pedalcw::kFieldCount) {
    std::copy(values.begin(), values.end(), out.begin());
  } else {
    throw CLI::ValidationError(flag, "expected a number or 7 comma-separated numbers");
  }
  return out;
}

// ---------------------------------------------------------------------------

// Re-raise with the offending file's name in front so diagnostics always
// say which input failed.
template <typename Fn>
auto naming_file(const std::string& file, Fn&& fn) {
  try {
    return fn();
  } catch (const pedalcw::Error& e) {
    throw pedalcw::Error(e.code(), file + ": " + e.what());
  }
}

int run_encode(const std::string& input, const std::string& output, bool integer_form) {
  auto song = naming_file(input, [&] { return pedalcw::encode_midi(read_binary(input)); });
  log_info(input + ": " + std::to_string(song.quantized.notes.size()) + " notes, " +
           std::to_string(song.spans.size()) + " pedal spans, " +
           std::to_string(song.tokens.size()) + " tokens");
  write_atomic(output,
               pedalcw::serialize_tokens(song.tokens, integer_form
                                                          ? pedalcw::TokenTextForm::codes
                                                          : pedalcw::TokenTextForm::names));
  return 0;
}

int run_decode(const std::string& input, const std::string& output) {
  auto decoded = naming_file(input, [&] {
    return pedalcw::decode(pedalcw::parse_tokens(read_text(input)));
  });
  if (decoded.truncated)
    std::cerr << "pedalcw: warning: '" << input
              << "' has no EOS token; decoded best-effort\n";
  write_atomic(output, pedalcw::write_midi(decoded.score, decoded.pedal));
  return 0;
}

int run_stats(const std::string& dir, const std::string& output) {
  std::vector<pedalcw::CorpusEntry> corpus;
  for (const fs::path& file : list_files(dir, {".mid", ".midi"})) {
    pedalcw::CorpusEntry entry;
    entry.name = file.filename().string();
    try {
      entry.score = pedalcw::parse_midi(read_binary(file));
    } catch (const pedalcw::Error& e) {
      throw pedalcw::Error(e.code(), file.string() + ": " + e.what());
    }
    entry.spans = pedalcw::pedal_pipeline(entry.score.raw_pedal, entry.score.end_tick());
    entry.chords = pedalcw::detect_chords(pedalcw::quantize_score(entry.score));
    log_debug(entry.name + ": " + std::to_string(entry.spans.size()) + " spans");
    corpus.push_back(std::move(entry));
  }
  auto report = pedalcw::analyze(corpus);  // raises empty_corpus when dir has no MIDI
  write_atomic(output, pedalcw::report_json(report).dump(2) + "\n");
  std::cout << pedalcw::report_table(report);
  return 0;
}

int run_train(const std::string& corpus_dir, const std::string& config_path,
              const std::string& output, pedalcw::TrainOptions opt, bool seed_given,
              std::uint64_t seed, const std::string& loss_log_path) {
  pedalcw::ModelConfig config;
  if (!config_path.empty()) {
    try {
      config = pedalcw::config_from_json(nlohmann::json::parse(read_text(config_path)));
    } catch (const nlohmann::json::exception& e) {
      throw pedalcw::Error(pedalcw::Errc::invalid_config, config_path + ": " + e.what());
    }
  }

  std::vector<std::vector<pedalcw::SuperToken>> corpus;
  for (const fs::path& file : list_files(corpus_dir, {".tokens", ".txt"})) {
    try {
      corpus.push_back(pedalcw::parse_tokens(read_text(file)));
    } catch (const pedalcw::Error& e) {
      throw pedalcw::Error(e.code(), file.string() + ": " + e.what());
    }
  }
  if (corpus.empty())
    pedalcw::raise(pedalcw::Errc::empty_corpus, "no .tokens files in '" + corpus_dir + "'");
  log_info("training on " + std::to_string(corpus.size()) + " sequences");

  opt.seed = resolve_seed(seed_given, seed);
  pedalcw::Model<float> model(config);
  opt.on_checkpoint = [&](int step) {
    write_atomic(output + ".step" + std::to_string(step),
                 pedalcw::checkpoint_bytes(model, step));
  };
  opt.on_step = [&](int step, double loss) {
    if (step % 100 == 0) log_info("step " + std::to_string(step) + " loss " + std::to_string(loss));
  };
  auto result = pedalcw::train(model, corpus, opt);

  write_atomic(output, pedalcw::checkpoint_bytes(model, result.steps));
  std::string csv;
  for (const std::string& line : result.loss_log) {
    csv += line;
    csv += '\n';
  }
  write_atomic(loss_log_path.empty() ? output + ".loss.csv" : loss_log_path, csv);
  log_info("final loss " + std::to_string(result.final_loss));
  return 0;
}

int run_generate(const std::string& checkpoint_path, const std::string& primer_path,
                 const std::string& output, pedalcw::SampleOptions opt, bool seed_given,
                 std::uint64_t seed, bool emit_tokens, bool integer_form) {
  auto loaded = pedalcw::load_checkpoint<float>(checkpoint_path);
  log_info("checkpoint at step " + std::to_string(loaded.step) + ", " +
           std::to_string(loaded.model.param_count()) + " parameters");

  std::vector<pedalcw::SuperToken> primer;
  if (!primer_path.empty())
    primer = naming_file(primer_path,
                         [&] { return pedalcw::parse_tokens(read_text(primer_path)); });

  opt.seed = resolve_seed(seed_given, seed);
  auto tokens = pedalcw::sample(loaded.model, primer, opt);
  log_info("sampled " + std::to_string(tokens.size()) + " tokens");

  if (emit_tokens) {
    write_atomic(output,
                 pedalcw::serialize_tokens(tokens, integer_form
                                                       ? pedalcw::TokenTextForm::codes
                                                       : pedalcw::TokenTextForm::names));
  } else {
    write_atomic(output, pedalcw::decode_to_midi(tokens));
  }
  return 0;
}

int exit_code_for(pedalcw::Errc code) {
  switch (code) {
    case pedalcw::Errc::invalid_config:
    case pedalcw::Errc::bad_checkpoint:
    case pedalcw::Errc::nan_loss:
    case pedalcw::Errc::invalid_primer:
    case pedalcw::Errc::sequence_too_long:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  init_log_level();

  CLI::App app{"pedal-aware compound-word symbolic music codec and generator"};
  app.require_subcommand(1);

  // encode
  std::string enc_in, enc_out;
  bool enc_ints = false;
  auto* enc = app.add_subcommand("encode", "MIDI file -> token file");
  enc->add_option("input", enc_in, "input .mid file")->required();
  enc->add_option("-o,--output", enc_out, "output token file")->required();
  enc->add_flag("--ints", enc_ints, "emit dense integer codes instead of readable fields");

  // decode
  std::string dec_in, dec_out;
  auto* dec = app.add_subcommand("decode", "token file -> MIDI file");
  dec->add_option("input", dec_in, "input token file")->required();
  dec->add_option("-o,--output", dec_out, "output .mid file")->required();

  // stats
  std::string stats_dir, stats_out;
  auto* stats = app.add_subcommand("stats", "pedal/beat/chord alignment report for a directory");
  stats->add_option("dir", stats_dir, "directory of .mid files")->required();
  stats->add_option("-o,--output", stats_out, "output JSON report")->required();

  // train
  std::string train_dir, train_config, train_out, train_loss_log;
  pedalcw::TrainOptions train_opt;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "train a decoder on a directory of token files");
  train->add_option("--corpus", train_dir, "directory of .tokens files")->required();
  train->add_option("--config", train_config, "model config JSON");
  train->add_option("-o,--output", train_out, "output checkpoint")->required();
  train->add_option("--steps", train_opt.steps, "optimizer steps");
  train->add_option("--batch", train_opt.batch_size, "chunks per step");
  train->add_option("--lr", train_opt.lr, "peak learning rate");
  train->add_option("--warmup", train_opt.warmup_steps, "linear warmup steps");
  train->add_option("--checkpoint-every", train_opt.checkpoint_every,
                    "also snapshot every N steps");
  train->add_option("--loss-log", train_loss_log, "loss CSV path (default <output>.loss.csv)");
  auto* train_seed_opt = train->add_option("--seed", train_seed, "shuffle/dropout seed");

  // generate
  std::string gen_ckpt, gen_primer, gen_out, gen_temp = "1.0", gen_nucleus = "1.0";
  pedalcw::SampleOptions gen_opt;
  std::uint64_t gen_seed = 0;
  bool gen_tokens = false, gen_ints = false;
  auto* gen = app.add_subcommand("generate", "sample from a checkpoint and write MIDI");
  gen->add_option("--checkpoint", gen_ckpt, "trained checkpoint")->required();
  gen->add_option("--bars", gen_opt.max_bars, "bars to generate")->required();
  gen->add_option("--primer", gen_primer, "token file to continue from");
  gen->add_option("--temperature", gen_temp, "sampling temperature (single or 7 per-field)");
  gen->add_option("--nucleus", gen_nucleus, "nucleus p (single or 7 per-field)");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "sampling seed");
  gen->add_flag("--emit-tokens", gen_tokens, "write tokens instead of MIDI");
  gen->add_flag("--ints", gen_ints, "with --emit-tokens, use integer codes");
  gen->add_option("-o,--output", gen_out, "output file")->required();

  try {
    app.parse(argc, argv);
    if (*enc) return run_encode(enc_in, enc_out, enc_ints);
    if (*dec) return run_decode(dec_in, dec_out);
    if (*stats) return run_stats(stats_dir, stats_out);
    if (*train)
      return run_train(train_dir, train_config, train_out, train_opt, !train_seed_opt->empty(),
                       train_seed, train_loss_log);
    if (*gen) {
      gen_opt.temperature = parse_per_field(gen_temp, "--temperature");
      gen_opt.nucleus = parse_per_field(gen_nucleus, "--nucleus");
      return run_generate(gen_ckpt, gen_primer, gen_out, gen_opt, !gen_seed_opt->empty(),
                          gen_seed, gen_tokens, gen_ints);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const pedalcw::Error& e) {
    std::cerr << "pedalcw: error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const IoError& e) {
    std::cerr << "pedalcw: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pedalcw: error: " << e.what() << "\n";
    return 2;
  }
}
