#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "gasket/error.hpp"

namespace gasket {

/// A finite word over {1,2,3} addressing the cell F_{w1} o ... o F_{wm}(S).
/// The empty word is the whole gasket.
class Word {
public:
    Word() = default;

    explicit Word(std::string_view symbols) : symbols_(symbols) {
        for (char c : symbols_)
            if (c < '1' || c > '3') throw DomainError("word symbols must be 1, 2 or 3: '" + symbols_ + "'");
    }

    /// The word of length `length` whose base-3 rank (symbol 1 -> digit 0) is `index`.
    static Word from_index(std::uint64_t index, int length) {
        Word w;
        w.symbols_.assign(static_cast<std::size_t>(length), '1');
        for (int i = length - 1; i >= 0; --i) {
            w.symbols_[static_cast<std::size_t>(i)] = static_cast<char>('1' + index % 3);
            index /= 3;
        }
        return w;
    }

    static Word repeat(int symbol, int length) {
        Word w;
        w.symbols_.assign(static_cast<std::size_t>(length), static_cast<char>('0' + symbol));
        return w;
    }

    int size() const noexcept { return static_cast<int>(symbols_.size()); }
    bool empty() const noexcept { return symbols_.empty(); }

    /// Symbol at position i as an integer in {1,2,3}.
    int operator[](int i) const { return symbols_[static_cast<std::size_t>(i)] - '0'; }

    /// Lexicographic rank among words of the same length.
    std::uint64_t index() const noexcept {
        std::uint64_t idx = 0;
        for (char c : symbols_) idx = idx * 3 + static_cast<std::uint64_t>(c - '1');
        return idx;
    }

    Word child(int symbol) const {
        if (symbol < 1 || symbol > 3) throw DomainError("child symbol must be 1, 2 or 3");
        Word w = *this;
        w.symbols_.push_back(static_cast<char>('0' + symbol));
        return w;
    }

    Word prefix(int length) const {
        Word w;
        w.symbols_ = symbols_.substr(0, static_cast<std::size_t>(length));
        return w;
    }

    const std::string& str() const noexcept { return symbols_; }

    friend bool operator==(const Word&, const Word&) = default;
    friend auto operator<=>(const Word&, const Word&) = default;

private:
    std::string symbols_;
};

/// The three children w1, w2, w3 of a cell.
inline std::array<Word, 3> refine_word(const Word& w) { return {w.child(1), w.child(2), w.child(3)}; }

inline std::uint64_t pow3(int m) {
    std::uint64_t r = 1;
    for (int i = 0; i < m; ++i) r *= 3;
    return r;
}

}  // namespace gasket
