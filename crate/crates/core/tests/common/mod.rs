#![allow(dead_code)]

use mltm::corpus::{pair_documents, BilingualCorpus, Document, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn doc(id: &str, lang: &str, tokens: &[usize], link: Option<&str>) -> Document {
    Document {
        id: id.into(),
        lang: lang.into(),
        tokens: tokens.to_vec(),
        labels: None,
        link: link.map(String::from),
    }
}

pub fn vocab(lang: &str, n: usize) -> Vocabulary {
    Vocabulary::from_types(lang, (0..n).map(|i| format!("{lang}{i}")).collect()).unwrap()
}

/// Bilingual corpus from token lists; `links[i] = Some(j)` links side-1
/// document `i` to side-2 document `j`.
pub fn corpus(v: [usize; 2], side1: &[&[usize]], side2: &[&[usize]], links: &[Option<usize>]) -> BilingualCorpus {
    let s1 = side1
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let link = links.get(i).copied().flatten().map(|j| format!("b{j}"));
            doc(&format!("a{i}"), "x", t, link.as_deref())
        })
        .collect();
    let s2 = side2.iter().enumerate().map(|(j, t)| doc(&format!("b{j}"), "y", t, None)).collect();
    BilingualCorpus {
        vocab: [vocab("x", v[0]), vocab("y", v[1])],
        paired: pair_documents(s1, s2).unwrap(),
    }
}

/// Random corpus with every side-1 document linked to the side-2 document
/// of the same index when `linked`.
pub fn random_corpus(seed: u64, docs: usize, v: usize, max_len: usize, linked: bool) -> BilingualCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let n = rng.random_range(0..=max_len);
        (0..n).map(|_| rng.random_range(0..v)).collect()
    };
    let s1: Vec<Vec<usize>> = (0..docs).map(|_| draw(&mut rng)).collect();
    let s2: Vec<Vec<usize>> = (0..docs).map(|_| draw(&mut rng)).collect();
    let r1: Vec<&[usize]> = s1.iter().map(Vec::as_slice).collect();
    let r2: Vec<&[usize]> = s2.iter().map(Vec::as_slice).collect();
    let links: Vec<Option<usize>> = (0..docs).map(|i| linked.then_some(i)).collect();
    corpus([v, v], &r1, &r2, &links)
}
