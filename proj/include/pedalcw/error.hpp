#pragma once

#include <stdexcept>
#include <string>

namespace pedalcw {

/// Error categories surfaced by the library. Parsing and quantization
/// problems are data errors; checkpoint/training problems are model errors.
enum class Errc {
  // MIDI file reading
  malformed_file,
  unsupported_division,
  unsupported_meter,
  empty_score,
  // quantization
  non_positive_duration,
  // token codec
  unquantized_input,
  out_of_range,
  malformed_sequence,
  parse_error,
  // model and training
  invalid_config,
  bad_checkpoint,
  empty_corpus,
  nan_loss,
  invalid_primer,
  sequence_too_long,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::malformed_file: return "malformed_file";
    case Errc::unsupported_division: return "unsupported_division";
    case Errc::unsupported_meter: return "unsupported_meter";
    case Errc::empty_score: return "empty_score";
    case Errc::non_positive_duration: return "non_positive_duration";
    case Errc::unquantized_input: return "unquantized_input";
    case Errc::out_of_range: return "out_of_range";
    case Errc::malformed_sequence: return "malformed_sequence";
    case Errc::parse_error: return "parse_error";
    case Errc::invalid_config: return "invalid_config";
    case Errc::bad_checkpoint: return "bad_checkpoint";
    case Errc::empty_corpus: return "empty_corpus";
    case Errc::nan_loss: return "nan_loss";
    case Errc::invalid_primer: return "invalid_primer";
    case Errc::sequence_too_long: return "sequence_too_long";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace pedalcw
