#pragma once

#include <stdexcept>
#include <string>

namespace hat {

/// Failure categories surfaced by the library. Tests match on these.
enum class Errc {
    invalid_sign_value,
    invalid_length,
    length_mismatch,
    empty_code_set,
    oracle_too_large,
    dim_mismatch,
    non_finite_input,
    non_finite_value,
    invalid_alpha,
    invalid_argument,
    degenerate_dataset,
    empty_database,
    target_label_absent,
    invalid_cutoff,
    invalid_spec,
    invalid_config,
    format_error,
    corrupt_file,
    missing_artifact,
    io_error,
};

inline const char* errc_name(Errc c) {
    switch (c) {
        case Errc::invalid_sign_value: return "InvalidSignValue";
        case Errc::invalid_length: return "InvalidLength";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::empty_code_set: return "EmptyCodeSet";
        case Errc::oracle_too_large: return "OracleTooLarge";
        case Errc::dim_mismatch: return "DimMismatch";
        case Errc::non_finite_input: return "NonFiniteInput";
        case Errc::non_finite_value: return "NonFiniteValue";
        case Errc::invalid_alpha: return "InvalidAlpha";
        case Errc::invalid_argument: return "InvalidArgument";
        case Errc::degenerate_dataset: return "DegenerateDataset";
        case Errc::empty_database: return "EmptyDatabase";
        case Errc::target_label_absent: return "TargetLabelAbsent";
        case Errc::invalid_cutoff: return "InvalidCutoff";
        case Errc::invalid_spec: return "InvalidSpec";
        case Errc::invalid_config: return "InvalidConfig";
        case Errc::format_error: return "FormatError";
        case Errc::corrupt_file: return "CorruptFile";
        case Errc::missing_artifact: return "MissingArtifact";
        case Errc::io_error: return "IoError";
    }
    return "UnknownError";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) { throw Error(code, message); }

} // namespace hat
