#pragma once

#include <stdexcept>
#include <string>

namespace tabqa {

/// Broad failure classes. The CLI maps them onto process exit codes.
enum class ErrorClass {
    config,    ///< bad configuration, usage, or missing credentials
    data,      ///< dataset, question or gold file problems
    provider,  ///< LLM endpoint failures, including replay misses
    sql,       ///< rejected or failed SQL
    answer,    ///< unparseable model answer
};

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}

    ErrorClass error_class() const noexcept { return class_; }

private:
    ErrorClass class_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorClass::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorClass::data, what) {}
};

}  // namespace tabqa
