mod common;

use engage_core::indicators::{classify_interaction_degree, count_peer_supporters, indicator_record};
use engage_core::InteractionDegree;

use common::{all_sequences, degree_oracle, party_oracle, thread_from_replies};

#[test]
fn degree_matches_brute_force_on_all_short_sequences() {
    let seqs = all_sequences(&['S', 'A', 'B', 'C'], 5);
    assert_eq!(seqs.len(), 1 + 4 + 16 + 64 + 256 + 1024);
    for s in &seqs {
        let t = thread_from_replies("t", s);
        let chars: Vec<char> = s.chars().collect();
        assert_eq!(classify_interaction_degree(&t), degree_oracle(&chars), "replies {s:?}");
        assert_eq!(count_peer_supporters(&t).1, party_oracle(&chars), "replies {s:?}");
    }
}

#[test]
fn degree_ladder_examples() {
    let d = |s: &str| classify_interaction_degree(&thread_from_replies("t", s));
    assert_eq!(d(""), InteractionDegree::Isolated);
    assert_eq!(d("A"), InteractionDegree::SingleInteraction);
    assert_eq!(d("AS"), InteractionDegree::RepeatedSeekerInteraction);
    assert_eq!(d("ASA"), InteractionDegree::MutualDiscourse);
    assert_eq!(d("ASB"), InteractionDegree::RepeatedSeekerInteraction);
    assert_eq!(d("ABSCB"), InteractionDegree::MutualDiscourse);
    // the seed's own follow-up merges into the seed
    assert_eq!(d("SA"), InteractionDegree::SingleInteraction);
}

#[test]
fn record_length_counts_merged_posts() {
    let r = indicator_record(&thread_from_replies("t", "AABSA"));
    assert_eq!(r.length, 5);
    assert_eq!(r.n_peer_supporters, 2);
    assert_eq!(r.deltas.len(), 4);
}
