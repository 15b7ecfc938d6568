//! Logical utterance spaces against an independent brute-force
//! construction: enumerate every partial assignment, keep the ones whose
//! named features all appear on at least one object, realize, and dedup.

use refgame::corpus::generate_synthetic;
use refgame::utterance::{enumerate_bundles, logical_utterances, realize_bundle};
use refgame::world::{AttributeSchema, ReferenceGame};

// Direct reconstruction of the space as ordered unique texts.
fn brute_force_texts(game: &ReferenceGame) -> Vec<String> {
    let mut texts = Vec::new();
    for bundle in enumerate_bundles(&game.schema) {
        let supported = game.objects.iter().any(|object| {
            bundle
                .present()
                .iter()
                .all(|(attribute, feature)| object.feature(attribute) == Some(feature.as_str()))
        });
        if !supported {
            continue;
        }
        let text = realize_bundle(&bundle);
        if !texts.contains(&text) {
            texts.push(text);
        }
    }
    texts
}

#[test]
fn single_object_world_has_sixteen_utterances() {
    // A playable game needs two objects, so this degenerate world is built
    // directly; the space construction itself has no such requirement.
    let schema = AttributeSchema::furniture();
    let game = ReferenceGame {
        id: "solo#0".into(),
        schema: schema.clone(),
        objects: vec![refgame::world::ObjectDescription::from_pairs([
            ("type", "chair"),
            ("colour", "red"),
            ("size", "large"),
            ("orientation", "left"),
        ])],
        target_index: 0,
    };
    let space = logical_utterances(&game);
    // Four attributes, each either mentioned or dropped.
    assert_eq!(space.utterances.len(), 16);
    let texts: Vec<String> = space.texts().map(str::to_string).collect();
    assert_eq!(texts, brute_force_texts(&game));
}

#[test]
fn fifty_random_games_match_the_brute_force_space() {
    let schema = AttributeSchema::furniture();
    for seed in 0..50 {
        let corpus = generate_synthetic(seed, &schema, 7, 1).unwrap();
        let game = &corpus.games()[0];
        let space = logical_utterances(game);
        let texts: Vec<String> = space.texts().map(str::to_string).collect();
        assert_eq!(texts, brute_force_texts(game), "seed {seed}");
        assert_eq!(space.game_id, game.id);
    }
}

#[test]
fn every_space_contains_the_bare_thing_and_all_full_descriptions() {
    let schema = AttributeSchema::furniture();
    for seed in [3, 19] {
        let corpus = generate_synthetic(seed, &schema, 7, 1).unwrap();
        let game = &corpus.games()[0];
        let space = logical_utterances(game);
        let texts: Vec<String> = space.texts().map(str::to_string).collect();
        assert!(texts.contains(&"a thing".to_string()));
        for object in &game.objects {
            let full = refgame::world::realize_description(object).unwrap();
            assert!(texts.contains(&full), "missing {full}");
        }
    }
}
