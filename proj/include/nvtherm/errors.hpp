#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace nvtherm {

/// A fit could not produce a usable estimate (no signal, no convergence, unidentifiable model).
class FitFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line and column of the first problem.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string source, std::size_t line, std::size_t column, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
          source_(std::move(source)),
          line_(line),
          column_(column),
          detail_(what) {}

    const std::string& source() const { return source_; }
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }
    const std::string& detail() const { return detail_; }

private:
    std::string source_;
    std::size_t line_;
    std::size_t column_;
    std::string detail_;
};

/// A pipeline stage failed; names the stage and the input it was working on.
class PipelineError : public std::runtime_error {
public:
    PipelineError(std::string stage, std::string input, const std::string& what)
        : std::runtime_error(stage + " [" + input + "]: " + what),
          stage_(std::move(stage)),
          input_(std::move(input)),
          detail_(what) {}

    const std::string& stage() const { return stage_; }
    const std::string& input() const { return input_; }
    const std::string& detail() const { return detail_; }

private:
    std::string stage_;
    std::string input_;
    std::string detail_;
};

}  // namespace nvtherm
