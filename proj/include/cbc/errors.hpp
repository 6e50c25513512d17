#pragma once

#include <stdexcept>
#include <string>

namespace cbc {

/// Base error; `category()` is the stable one-word token the CLI prints.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

struct StateError : Error {
    explicit StateError(const std::string& m) : Error("state", m) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error("config", m) {}
};

struct IoError : Error {
    explicit IoError(const std::string& m) : Error("io", m) {}
};

/// Dataset container failures keep a machine-checkable kind on top of the
/// category so tooling can distinguish a bad magic from a short payload.
class DataFormatError : public Error {
public:
    enum class Kind { bad_magic, bad_version, bad_header, truncated, trailing_data, bad_label };

    DataFormatError(Kind kind, const std::string& m)
        : Error(kind_name(kind), m), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    static const char* kind_name(Kind kind) {
        switch (kind) {
            case Kind::bad_magic: return "bad_magic";
            case Kind::bad_version: return "bad_version";
            case Kind::bad_header: return "bad_header";
            case Kind::truncated: return "truncated";
            case Kind::trailing_data: return "trailing_data";
            case Kind::bad_label: return "bad_label";
        }
        return "format";
    }

private:
    Kind kind_;
};

}  // namespace cbc
