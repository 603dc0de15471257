#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tabqa/error.hpp"

namespace tabqa {

enum class AnswerType { boolean, number, category, list_category, list_number };

std::string_view to_string(AnswerType type) noexcept;

/// Accepts `boolean`, `number`, `category`, `list_category`, `list_number`
/// and the bracketed spellings `list[category]`, `list[number]`.
AnswerType parse_answer_type(std::string_view text);

struct Boolean {
    bool value = false;
    friend bool operator==(const Boolean&, const Boolean&) = default;
};
struct Number {
    double value = 0;
    friend bool operator==(const Number&, const Number&) = default;
};
struct Category {
    std::string value;
    friend bool operator==(const Category&, const Category&) = default;
};
struct CategoryList {
    std::vector<std::string> values;
    friend bool operator==(const CategoryList&, const CategoryList&) = default;
};
struct NumberList {
    std::vector<double> values;
    friend bool operator==(const NumberList&, const NumberList&) = default;
};
/// Placeholder for a failed question whose type has no natural empty value.
struct NoAnswer {
    friend bool operator==(const NoAnswer&, const NoAnswer&) = default;
};

using AnswerValue = std::variant<Boolean, Number, Category, CategoryList, NumberList, NoAnswer>;

/// nullopt for NoAnswer.
std::optional<AnswerType> answer_type(const AnswerValue& value) noexcept;

/// The typed empty marker used when a question fails without any parsed
/// answer: empty category, empty list, or NoAnswer.
AnswerValue empty_answer(std::optional<AnswerType> expected);

/// Text form that `parse_answer` maps back to the same value: `True`/`False`,
/// shortest round-trip decimal, the category verbatim (inside one extra pair
/// of quotes when it is itself quoted), and lists in the
/// bracketed quoted form `['cat', 'dog']` / `[1, 2.5]`. NoAnswer is empty.
std::string canonical_text(const AnswerValue& value);

enum class AnswerParseErrorKind { unparseable, type_mismatch };

class AnswerParseError : public Error {
public:
    AnswerParseError(AnswerParseErrorKind kind, const std::string& what, std::string raw)
        : Error(ErrorClass::answer, what), kind_(kind), raw_(std::move(raw)) {}

    AnswerParseErrorKind kind() const noexcept { return kind_; }
    const std::string& raw() const noexcept { return raw_; }

private:
    AnswerParseErrorKind kind_;
    std::string raw_;
};

/// Parses provider text into a typed answer.
///
/// If the text has a line starting with `Answer:` the text after the last
/// such marker is used. Surrounding whitespace and one pair of matching
/// quotes are removed. Booleans are exactly `true`/`false` in any case;
/// numbers are decimal with optional `1,234` grouping; lists use the
/// bracketed, comma separated, optionally quoted form. With `expected` set
/// the result must be that variant. Without it the first match among list,
/// boolean, number, category wins.
AnswerValue parse_answer(std::string_view raw, std::optional<AnswerType> expected = std::nullopt);

/// Strict decimal parse shared with gold loading; nullopt when not a number.
std::optional<double> parse_number(std::string_view text);

}  // namespace tabqa
