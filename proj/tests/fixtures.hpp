#pragma once
// Reference transcripts shared by the unit tests and the acceptance run.

#include <string>
#include <vector>

#include "agentrec/agent.hpp"

namespace testing {

inline const std::string kTasteFixture =
    "TASTE: Romantic comedy enthusiast\n"
    "REASON: The user gave a rating of 4 to movies like \"Shakespeare in Love\" and \"My Best Friend's Wedding\", "
    "suggesting a fondness for romantic comedies.\n"
    "TASTE: Classic movie admirer\n"
    "REASON: The user gave a rating of 5 to movies like \"Graduate, The\" and \"Ghost\", indicating an appreciation "
    "for classic films.\n"
    "TASTE: Adventure seeker\n"
    "REASON: The user gave a rating of 3 to movies like \"Jurassic Park\" and \"Titanic\", suggesting an inclination "
    "towards adventure movies.\n"
    "HIGH RATINGS: The user tends to give high ratings (above 3) to movies that fall into genres like romance, "
    "classic, and adventure. This suggests a preference for movies that evoke emotions, have timeless appeal, and "
    "offer thrilling experiences.\n"
    "LOW RATINGS: The user tends to give low ratings (below 2) to movies that belong to the horror and fantasy genres. "
    "This indicates a lesser interest in movies that involve elements of fear and imagination.\n";

inline const std::vector<agentrec::PageItem> kAppendixPage = {
    {"1", "Breakfast Club, The (1985)", 3.5, "A summary."},
    {"2", "Desperately Seeking Susan (1985)", 3.5, "A summary."},
    {"3", "Mary Poppins (1964)", 3.5, "A summary."},
    {"4", "Bull Durham (1988)", 3.5, "A summary."}};

inline const std::string kAppendixReaction =
    "MOVIE: Breakfast Club, The (1985); ALIGN: Yes; REASON: I enjoy classic films and this movie falls into that "
    "category.\n"
    "MOVIE: Desperately Seeking Susan (1985); ALIGN: No; REASON: I am not particularly interested in movies about "
    "bored housewives.\n"
    "MOVIE: Mary Poppins (1964); ALIGN: Yes; REASON: I have a fondness for musicals and this is a classic one.\n"
    "MOVIE: Bull Durham (1988); ALIGN: No; REASON: I am not a fan of movies about baseball.\n"
    "NUM: 2; WATCH: Breakfast Club, The (1985), Mary Poppins (1964); REASON: These movies align with my taste and I "
    "want to explore different genres.\n"
    "MOVIE: Breakfast Club, The (1985); RATING: 4; FEELING: I really enjoyed the character development and the "
    "unexpected friendships in this movie.\n"
    "MOVIE: Mary Poppins (1964); RATING: 5; FEELING: The music, the magic, and the heartwarming story made this movie "
    "a delight to watch.\n";

inline const std::string kNextFixture =
    "POSITIVE: I enjoyed watching \"Citizen Kane\" and rated it a 4. The recommender system did a good job in "
    "suggesting this movie to me.\nFatigue level: Low\n[NEXT]; Reason: I'm feeling positive about the recommender "
    "system and I'm not tired yet, so I'll continue browsing.";

inline const std::string kExitFixture =
    "NEGATIVE: I disliked some of the movies recommended to me on page 1 and did not watch or rate others. This has "
    "left me unsatisfied with the recommendation result so far.\n[EXIT]; Reason: I am unsatisfied with the "
    "recommendations and I am starting to feel tired.";

inline const std::string kSatisfiedFixture =
    "Satisfied with the recommender system as it has recommended movies that I enjoyed and rated highly.";

inline const std::string kUnsatisfiedFixture =
    "Unsatisfied with the recommendation result because I disliked some of the movies recommended to me.";

inline const std::string kInterviewFixture =
    "Rating: \n6\nReason: \nWhile the recommender system did provide me with some movies that aligned with my "
    "taste, there were also a few recommendations that I disliked.";

inline const std::string kGenreFixture = "Godfather, The (1972): Action|Crime|Drama\nA family saga of power and loyalty.";

}  // namespace testing
