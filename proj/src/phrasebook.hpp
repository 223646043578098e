#pragma once

// Closed phrase inventory for the template generator. Internal to the library.

#include <array>
#include <string_view>

namespace gdpo::phrasebook {

// An opinion scale: a question frame ("$" marks the subject slot) and one
// description per agreement degree 5..1 (index 0 holds degree 5).
struct Scale {
    std::string_view question;
    std::array<std::string_view, 5> by_degree;
};

inline constexpr std::array<Scale, 6> kScales{{
    {"how do you evaluate the response on $ ?",
     {"Very good job", "Somewhat good job", "About the same", "Somewhat bad job", "Very bad job"}},
    {"how strong is support for $ ?",
     {"Very strong", "Fairly strong", "Depends on the situation", "Not too strong", "Not strong at all"}},
    {"can action on $ be justified ?",
     {"Often be justified", "Sometimes be justified", "Depends on the situation", "Rarely be justified",
      "Never be justified"}},
    {"when will $ lead the world ?",
     {"Next 10 years", "Next 20 years", "Has already happened", "Next 50 years", "Will never happen"}},
    {"how well is $ going ?",
     {"Very well", "Somewhat well", "Has not changed", "Not too well", "Not well at all"}},
    {"do you associate $ with the people ?", {"Yes", "Mostly yes", "Not sure", "Mostly no", "No"}},
}};

inline constexpr std::string_view kRefusal = "DK/Refused";

inline constexpr std::string_view kReviewQuestion = "rate the movie $ from one to five";
inline constexpr std::array<std::string_view, 5> kRatings{"1", "2", "3", "4", "5"};

inline constexpr std::array<std::string_view, 24> kSubjects{
    "climate", "trade",     "energy",  "housing",   "defense",   "schools", "healthcare", "taxes",
    "science", "transport", "farming", "migration", "water",     "tourism", "elections",  "media",
    "banking", "religion",  "sports",  "pensions",  "diplomacy", "safety",  "culture",    "technology"};

// Response fragments. Openers, connectors and closers vary by style; stances
// and reasons vary by belief class (index = class value 0..5).
inline constexpr std::array<std::string_view, 8> kOpeners{
    "well ,", "honestly ,", "hey !", "in my opinion ,", "frankly ,", "you know ,", "to be fair ,", "look ,"};
inline constexpr std::array<std::string_view, 8> kConnectors{
    "because", "since", "as", "given that", "seeing that", "considering", "for", "now that"};
inline constexpr std::array<std::string_view, 8> kClosers{
    "that is my view", "thanks for asking", "let us talk more", "that sums it up",
    "no doubt",        "just saying",       "all things considered", "end of story"};

inline constexpr std::array<std::string_view, 6> kOpinionStances{
    "i would rather not say", "i strongly disagree", "i mostly disagree",
    "i feel neutral",         "i mostly agree",      "i strongly agree"};
inline constexpr std::array<std::string_view, 6> kOpinionReasons{
    "i do not know enough", "it is a failure", "it falls short",
    "it is hard to tell",   "it mostly works", "it works great"};

inline constexpr std::array<std::string_view, 6> kReviewStances{
    "no rating", "i hated it", "i did not like it", "it was okay", "i liked it", "i loved it"};
inline constexpr std::array<std::string_view, 6> kReviewReasons{
    "i skipped it",          "the plot was a mess", "the pacing dragged",
    "it had its moments",    "the cast was strong", "every scene was superb"};

// Representative rows of the class-belief mapping table that the generator
// does not otherwise emit.
struct MapRow {
    std::string_view description;
    int cls;
};

inline constexpr std::array<MapRow, 14> kExtraMapRows{{
    {"Not a moral issue", 0},
    {"Never heard of", 0},
    {"China will not replace U.S.", 1},
    {"Next 50 years", 2},
    {"Wrong decision", 2},
    {"Remove its troops", 2},
    {"No effect", 3},
    {"About right", 3},
    {"Right decision", 4},
    {"Keep troops in Iraq", 4},
    {"Next 20 years", 4},
    {"Next 10 years", 5},
    {"Very strong", 5},
    {"Very good job", 5},
}};

}  // namespace gdpo::phrasebook
