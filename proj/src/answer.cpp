#include "tabqa/answer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

namespace tabqa {

namespace {

std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view strip_quotes(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == s.back() && (s.front() == '"' || s.front() == '\'' || s.front() == '`')) {
        s = trim(s.substr(1, s.size() - 2));
    }
    return s;
}

/// Text after the last line that starts with "Answer:", or the input.
std::string_view answer_section(std::string_view raw) {
    std::size_t found = std::string_view::npos;
    std::size_t line_start = 0;
    while (line_start <= raw.size()) {
        auto line_end = raw.find('\n', line_start);
        auto line = raw.substr(line_start, line_end == std::string_view::npos ? std::string_view::npos
                                                                              : line_end - line_start);
        auto offset = line.find_first_not_of(" \t");
        if (offset != std::string_view::npos && lower(line.substr(offset, 7)) == "answer:") {
            found = line_start + offset + 7;
        }
        if (line_end == std::string_view::npos) break;
        line_start = line_end + 1;
    }
    return found == std::string_view::npos ? raw : raw.substr(found);
}

std::string number_text(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string quote_element(const std::string& s) {
    const bool use_double = s.find('\'') != std::string::npos && s.find('"') == std::string::npos;
    const char q = use_double ? '"' : '\'';
    std::string out(1, q);
    for (char c : s) {
        if (c == '\\' || c == q) out.push_back('\\');
        out.push_back(c);
    }
    out.push_back(q);
    return out;
}

struct ListElement {
    std::string text;
    bool quoted = false;
};

std::optional<std::vector<ListElement>> parse_list(std::string_view s) {
    s = trim(s);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') return std::nullopt;
    s = s.substr(1, s.size() - 2);
    std::vector<ListElement> out;
    std::size_t i = 0;
    auto skip_ws = [&] {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    };
    skip_ws();
    if (i == s.size()) return out;
    while (true) {
        skip_ws();
        ListElement el;
        if (i < s.size() && (s[i] == '\'' || s[i] == '"')) {
            const char q = s[i++];
            bool closed = false;
            while (i < s.size()) {
                char c = s[i++];
                if (c == '\\' && i < s.size()) {
                    el.text.push_back(s[i++]);
                } else if (c == q) {
                    closed = true;
                    break;
                } else {
                    el.text.push_back(c);
                }
            }
            if (!closed) return std::nullopt;
            el.quoted = true;
            skip_ws();
        } else {
            auto end = s.find(',', i);
            auto token = trim(s.substr(i, end == std::string_view::npos ? std::string_view::npos : end - i));
            if (token.empty() || token.front() == '[') return std::nullopt;
            el.text = std::string(token);
            i = end == std::string_view::npos ? s.size() : end;
        }
        out.push_back(std::move(el));
        if (i == s.size()) break;
        if (s[i] != ',') return std::nullopt;
        ++i;
        skip_ws();
        if (i == s.size()) break;  // trailing comma
    }
    return out;
}

[[noreturn]] void fail(AnswerParseErrorKind kind, const std::string& why, std::string_view raw) {
    throw AnswerParseError(kind, why + ": \"" + std::string(raw) + "\"", std::string(raw));
}

}  // namespace

std::string_view to_string(AnswerType type) noexcept {
    switch (type) {
    case AnswerType::boolean: return "boolean";
    case AnswerType::number: return "number";
    case AnswerType::category: return "category";
    case AnswerType::list_category: return "list_category";
    case AnswerType::list_number: return "list_number";
    }
    return "category";
}

AnswerType parse_answer_type(std::string_view text) {
    auto t = lower(trim(text));
    if (t == "boolean" || t == "bool") return AnswerType::boolean;
    if (t == "number") return AnswerType::number;
    if (t == "category") return AnswerType::category;
    if (t == "list_category" || t == "list[category]") return AnswerType::list_category;
    if (t == "list_number" || t == "list[number]") return AnswerType::list_number;
    throw DataError("unknown answer type '" + std::string(text) + "'");
}

std::optional<AnswerType> answer_type(const AnswerValue& value) noexcept {
    switch (value.index()) {
    case 0: return AnswerType::boolean;
    case 1: return AnswerType::number;
    case 2: return AnswerType::category;
    case 3: return AnswerType::list_category;
    case 4: return AnswerType::list_number;
    default: return std::nullopt;
    }
}

AnswerValue empty_answer(std::optional<AnswerType> expected) {
    if (!expected) return NoAnswer{};
    switch (*expected) {
    case AnswerType::category: return Category{};
    case AnswerType::list_category: return CategoryList{};
    case AnswerType::list_number: return NumberList{};
    default: return NoAnswer{};
    }
}

std::string canonical_text(const AnswerValue& value) {
    struct Visitor {
        std::string operator()(const Boolean& b) const { return b.value ? "True" : "False"; }
        std::string operator()(const Number& n) const { return number_text(n.value); }
        std::string operator()(const Category& c) const {
            const auto& v = c.value;
            // One extra pair of quotes survives the quote stripping in parse_answer.
            if (v.size() >= 2 && v.front() == v.back() && (v.front() == '"' || v.front() == '\'' || v.front() == '`')) {
                const char q = v.front() == '"' ? '\'' : '"';
                return q + v + q;
            }
            return v;
        }
        std::string operator()(const CategoryList& l) const {
            std::string out = "[";
            for (std::size_t i = 0; i < l.values.size(); ++i) {
                if (i) out += ", ";
                out += quote_element(l.values[i]);
            }
            return out + "]";
        }
        std::string operator()(const NumberList& l) const {
            std::string out = "[";
            for (std::size_t i = 0; i < l.values.size(); ++i) {
                if (i) out += ", ";
                out += number_text(l.values[i]);
            }
            return out + "]";
        }
        std::string operator()(const NoAnswer&) const { return {}; }
    };
    return std::visit(Visitor{}, value);
}

std::optional<double> parse_number(std::string_view text) {
    auto s = trim(text);
    if (s.empty()) return std::nullopt;
    std::string digits;
    digits.reserve(s.size());
    // 1,234,567.5 style grouping: groups of exactly three after the first.
    if (s.find(',') != std::string_view::npos) {
        std::size_t i = (s.front() == '-' || s.front() == '+') ? 1 : 0;
        auto int_end = s.find('.', i);
        auto int_part = s.substr(i, int_end == std::string_view::npos ? std::string_view::npos : int_end - i);
        std::size_t group_start = 0;
        for (bool first = true;; first = false) {
            auto comma = int_part.find(',', group_start);
            auto group = int_part.substr(group_start, comma == std::string_view::npos ? std::string_view::npos
                                                                                      : comma - group_start);
            bool size_ok = first ? (!group.empty() && group.size() <= 3) : group.size() == 3;
            if (!size_ok || !std::all_of(group.begin(), group.end(),
                                         [](unsigned char c) { return std::isdigit(c); })) {
                return std::nullopt;
            }
            if (comma == std::string_view::npos) break;
            group_start = comma + 1;
        }
        for (char c : s) {
            if (c != ',') digits.push_back(c);
        }
    } else {
        digits.assign(s);
    }

    std::string_view d = digits;
    if (!d.empty() && d.front() == '+') d.remove_prefix(1);
    if (d.empty()) return std::nullopt;
    // Only plain decimal / scientific notation; no inf, nan or hex.
    std::size_t i = 0, mantissa = 0;
    if (d[i] == '-') ++i;
    while (i < d.size() && std::isdigit(static_cast<unsigned char>(d[i]))) ++i, ++mantissa;
    if (i < d.size() && d[i] == '.') {
        ++i;
        while (i < d.size() && std::isdigit(static_cast<unsigned char>(d[i]))) ++i, ++mantissa;
    }
    if (mantissa == 0) return std::nullopt;
    if (i < d.size() && (d[i] == 'e' || d[i] == 'E')) {
        ++i;
        if (i < d.size() && (d[i] == '+' || d[i] == '-')) ++i;
        std::size_t exp = 0;
        while (i < d.size() && std::isdigit(static_cast<unsigned char>(d[i]))) ++i, ++exp;
        if (exp == 0) return std::nullopt;
    }
    if (i != d.size()) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(d.data(), d.data() + d.size(), v);
    if (ec != std::errc{} || ptr != d.data() + d.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

AnswerValue parse_answer(std::string_view raw, std::optional<AnswerType> expected) {
    auto text = trim(answer_section(raw));
    if (text.empty()) fail(AnswerParseErrorKind::unparseable, "empty answer", raw);

    const bool looks_list = text.front() == '[' && text.back() == ']';
    auto scalar = strip_quotes(text);
    if (scalar.empty()) fail(AnswerParseErrorKind::unparseable, "empty answer", raw);

    auto as_boolean = [&]() -> std::optional<AnswerValue> {
        auto l = lower(scalar);
        if (l == "true") return Boolean{true};
        if (l == "false") return Boolean{false};
        return std::nullopt;
    };
    auto as_number = [&]() -> std::optional<AnswerValue> {
        if (auto v = parse_number(scalar)) return Number{*v};
        return std::nullopt;
    };
    auto as_list = [&](std::optional<AnswerType> want) -> std::optional<AnswerValue> {
        auto elements = parse_list(text);
        if (!elements) return std::nullopt;
        bool all_numbers = std::all_of(elements->begin(), elements->end(), [](const ListElement& e) {
            return !e.quoted && parse_number(e.text).has_value();
        });
        if (want == AnswerType::list_number || (!want && all_numbers && !elements->empty())) {
            NumberList out;
            for (const auto& e : *elements) {
                auto v = parse_number(e.text);
                if (!v) return std::nullopt;
                out.values.push_back(*v);
            }
            return out;
        }
        CategoryList out;
        for (auto& e : *elements) out.values.push_back(std::move(e.text));
        return out;
    };

    if (!expected) {
        if (looks_list) {
            if (auto v = as_list(std::nullopt)) return *v;
        }
        if (auto v = as_boolean()) return *v;
        if (auto v = as_number()) return *v;
        return Category{std::string(scalar)};
    }

    std::optional<AnswerValue> parsed;
    switch (*expected) {
    case AnswerType::boolean: parsed = as_boolean(); break;
    case AnswerType::number: parsed = as_number(); break;
    case AnswerType::category: parsed = Category{std::string(scalar)}; break;
    case AnswerType::list_category:
    case AnswerType::list_number: parsed = as_list(*expected); break;
    }
    if (!parsed) {
        fail(AnswerParseErrorKind::type_mismatch, "answer is not a valid " + std::string(to_string(*expected)), raw);
    }
    return *parsed;
}

}  // namespace tabqa
