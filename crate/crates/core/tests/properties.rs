//! Randomized properties of the core data structures, each checked against
//! a direct reference computation.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ceds_core::bvlogic::{build, evaluate_bool, Assignment, Conjunction, Op, Term, VarId};
use ceds_core::eqcheck::{matched_parts, syntactically_equal, build_not_subseteq, DecidedBy, DecisionPipeline, Outcome};
use ceds_core::explorer::{explore, ExploreConfig, SeenIndex, StoreKind};
use ceds_core::multistate::{
    initial_state, is_matching, match_states, prog_var, pvars, slice, MultiState, Representation, SlicedParts,
    SymbolicPart,
};
use ceds_core::progmodel::{parse_program, print_program, Instr, ProgVar};
use ceds_core::solverbridge::{BackendConfig, Enumerator};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OPS: [Op; 9] = [
    Op::Add,
    Op::Mul,
    Op::And,
    Op::Or,
    Op::Xor,
    Op::UDiv,
    Op::Mod,
    Op::Shl,
    Op::LShr,
];

fn operand(rng: &mut ChaCha8Rng, vars: &[VarId], w: u32, depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.5) {
        if rng.gen_bool(0.75) {
            Term::var(*vars.choose(rng).unwrap(), w)
        } else {
            Term::bv(rng.gen_range(0..1u64 << w), w)
        }
    } else {
        let op = *OPS.choose(rng).unwrap();
        Term::apply(op, vec![operand(rng, vars, w, depth - 1), operand(rng, vars, w, depth - 1)]).unwrap()
    }
}

/// A random predicate over `vars`, all of width `w`.
fn atom(rng: &mut ChaCha8Rng, vars: &[VarId], w: u32) -> Term {
    let (a, b) = (operand(rng, vars, w, 2), operand(rng, vars, w, 1));
    match rng.gen_range(0..5) {
        0 => build::eq(a, b),
        1 => build::ne(a, b),
        2 => build::ule(a, b),
        3 => build::sle(a, b),
        _ => build::or(vec![build::eq(a.clone(), b.clone()), build::ule(b, a)]),
    }
}

fn var(pos: u32, g: u32) -> VarId {
    VarId::new(0, pos, g)
}

/// Clauses over at most two of `nvars` variables each, with occasional
/// vacuous equalities.
fn random_clauses(rng: &mut ChaCha8Rng, nvars: u32, n: usize, w: u32) -> Vec<Term> {
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=2.min(nvars as usize));
            let vars: Vec<VarId> = (0..nvars)
                .collect::<Vec<_>>()
                .choose_multiple(rng, k)
                .map(|&p| var(p, rng.gen_range(1..=2)))
                .collect();
            if rng.gen_bool(0.1) {
                let v = Term::var(vars[0], w);
                build::eq(v.clone(), v)
            } else {
                atom(rng, &vars, w)
            }
        })
        .collect()
}

fn sorted_keys(parts: &[Conjunction]) -> Vec<Vec<u8>> {
    let mut k: Vec<Vec<u8>> = parts.iter().map(|p| p.canonical_key().as_bytes().to_vec()).collect();
    k.sort();
    k
}

#[test]
fn canonical_key_ignores_clause_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let clauses = random_clauses(&mut rng, 4, 8, 4);
    let keys: BTreeSet<Vec<u8>> = (0..1000)
        .map(|_| {
            let mut c = clauses.clone();
            c.shuffle(&mut rng);
            Conjunction::from_clauses(c).canonical_key().as_bytes().to_vec()
        })
        .collect();
    assert_eq!(keys.len(), 1);
}

#[test]
fn canonical_keys_do_not_collide() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut seen: HashMap<Vec<u8>, Vec<Vec<u8>>> = HashMap::new();
    for _ in 0..100_000 {
        let n = rng.gen_range(0..=4);
        let w = rng.gen_range(1..=4);
        let c = Conjunction::from_clauses(random_clauses(&mut rng, 3, n, w));
        let mut multiset: Vec<Vec<u8>> = c.clauses().iter().map(|t| t.encoding().to_vec()).collect();
        multiset.sort();
        let key = c.canonical_key().as_bytes().to_vec();
        if let Some(prev) = seen.get(&key) {
            assert_eq!(prev, &multiset, "two clause multisets share a key");
        } else {
            seen.insert(key, multiset);
        }
    }
}

#[test]
fn pvars_agree_with_clause_rescan() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let n = rng.gen_range(0..6);
        let c = Conjunction::from_clauses(random_clauses(&mut rng, 5, n, 3));
        let mut rescan = BTreeSet::new();
        for clause in c.clauses() {
            for id in clause.free_vars() {
                rescan.insert(ProgVar {
                    segment: id.segment,
                    position: id.position,
                });
            }
        }
        assert_eq!(pvars(&c), rescan);
    }
}

#[test]
fn incremental_conjoin_equals_slicing_the_whole() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let n = rng.gen_range(1..10);
        let clauses = random_clauses(&mut rng, 6, n, 3);
        let mut sliced = SymbolicPart::empty(Representation::Sliced);
        let mut mono = SymbolicPart::empty(Representation::Monolithic);
        for c in &clauses {
            sliced.conjoin_clause(c.clone());
            mono.conjoin_clause(c.clone());
        }
        let whole = mono.conjunction();
        assert_eq!(sorted_keys(sliced.parts()), sorted_keys(&slice(&whole)));
        assert_eq!(sliced.conjunction().canonical_key(), whole.canonical_key());
        if let SymbolicPart::Sliced(s) = &sliced {
            assert!(s.parts_independent());
        }
    }
}

/// Components of the union of both sides' "same part" relations on
/// program variables, by repeated merging.
fn joint_components(a: &[BTreeSet<ProgVar>], b: &[BTreeSet<ProgVar>]) -> BTreeSet<BTreeSet<ProgVar>> {
    let mut groups: Vec<BTreeSet<ProgVar>> = a.iter().chain(b).filter(|s| !s.is_empty()).cloned().collect();
    loop {
        let mut merged = false;
        'outer: for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                if !groups[i].is_disjoint(&groups[j]) {
                    let g = groups.remove(j);
                    groups[i].extend(g);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            return groups.into_iter().collect();
        }
    }
}

#[test]
fn matching_on_adversarial_partitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let nvars = rng.gen_range(1..=8u32);
        let side = |rng: &mut ChaCha8Rng| {
            // random partition of the variables, one part per group
            let ngroups = rng.gen_range(1..=nvars);
            let mut groups: Vec<Vec<u32>> = vec![Vec::new(); ngroups as usize];
            for p in 0..nvars {
                groups[rng.gen_range(0..ngroups as usize)].push(p);
            }
            let parts: Vec<Conjunction> = groups
                .into_iter()
                .filter(|g| !g.is_empty())
                .map(|g| {
                    let mut c = Conjunction::new();
                    for w in g.windows(2) {
                        c.push(build::ule(Term::var(var(w[0], 1), 2), Term::var(var(w[1], 1), 2)));
                    }
                    if g.len() == 1 {
                        let v = Term::var(var(g[0], 1), 2);
                        c.push(build::eq(v.clone(), v));
                    }
                    c
                })
                .collect();
            SlicedParts::from_parts(parts)
        };
        let (a, b) = (side(&mut rng), side(&mut rng));
        let (ma, mb) = match_states(&a, &b).unwrap();
        assert!(is_matching(&ma, &mb));

        // direct check of the definition
        assert_eq!(ma.len(), mb.len());
        let pa: Vec<BTreeSet<ProgVar>> = ma.parts().iter().map(pvars).collect();
        let pb: Vec<BTreeSet<ProgVar>> = mb.parts().iter().map(pvars).collect();
        for i in 0..pa.len() {
            assert_eq!(pa[i], pb[i]);
            for j in i + 1..pa.len() {
                assert!(pa[i].is_disjoint(&pa[j]) && pb[i].is_disjoint(&pb[j]));
            }
        }
        // finest such grouping
        let input_a: Vec<_> = a.parts().iter().map(pvars).collect();
        let input_b: Vec<_> = b.parts().iter().map(pvars).collect();
        assert_eq!(pa.iter().cloned().collect::<BTreeSet<_>>(), joint_components(&input_a, &input_b));
        // nothing lost or invented
        let all = |p: &SlicedParts| {
            let c = SymbolicPart::Sliced(p.clone()).conjunction();
            c.canonical_key().clone()
        };
        assert_eq!(all(&a), all(&ma));
        assert_eq!(all(&b), all(&mb));
    }
}

#[test]
fn mismatched_variable_sets_do_not_match() {
    let a = SlicedParts::from_parts(vec![Conjunction::from_clauses([build::eq(
        Term::var(var(0, 1), 2),
        Term::bv(1, 2),
    )])]);
    let b = SlicedParts::from_parts(vec![Conjunction::from_clauses([build::eq(
        Term::var(var(1, 1), 2),
        Term::bv(1, 2),
    )])]);
    assert!(match_states(&a, &b).is_err());
}

#[test]
fn seen_index_agrees_with_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let p = parse_program("fn main() { var x: u2; var y: u2 = 1; }").unwrap();
    let base = initial_state(&p, Representation::Sliced);
    let mut idx = SeenIndex::new();
    let mut all: Vec<MultiState> = Vec::new();
    for _ in 0..1000 {
        let mut s = base.clone();
        s.control.threads[0].frames[0].pc = rng.gen_range(0..6);
        s.error = rng.gen_bool(0.1);
        if rng.gen_bool(0.5) {
            let pv = ProgVar {
                segment: s.control.threads[0].frames[0].segment,
                position: 1,
            };
            s.shape.var_mut(pv).unwrap().mark = ceds_core::progmodel::Mark::Explicit(rng.gen_range(0..4));
        }
        s.symbolic
            .conjoin_clause(build::ule(Term::var(var(0, 1), 2), Term::bv(rng.gen_range(0..4), 2)));
        idx.put(s.clone());
        all.push(s);
    }
    for probe in all.iter().step_by(7) {
        let linear: Vec<usize> = (0..all.len())
            .filter(|&i| all[i].same_explicit_part(probe))
            .collect();
        assert_eq!(idx.candidates(&probe.explicit_key()), linear.as_slice());
    }
    assert_eq!(idx.len(), 1000);
}

/// A state of `fn main() { var v0..v{n-1}: u{w}; }` with `clauses`
/// conjoined and generations taken from the clauses.
fn state_with(n: u32, w: u32, clauses: &[Term], repr: Representation) -> MultiState {
    let decls: String = (0..n).map(|i| format!("var v{i}: u{w}; ")).collect();
    let p = parse_program(&format!("fn main() {{ {decls}}}")).unwrap();
    let mut s = initial_state(&p, repr);
    for c in clauses {
        for id in c.free_vars() {
            let g = s.gens.entry(prog_var(id)).or_insert(id.generation);
            *g = (*g).max(id.generation);
        }
        s.symbolic.conjoin_clause(c.clone());
    }
    s
}

fn gen1_clauses(rng: &mut ChaCha8Rng, nvars: u32, n: usize, w: u32) -> Vec<Term> {
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..=2.min(nvars as usize));
            let vars: Vec<VarId> = (0..nvars)
                .collect::<Vec<_>>()
                .choose_multiple(rng, k)
                .map(|&p| var(p, 1))
                .collect();
            atom(rng, &vars, w)
        })
        .collect()
}

#[test]
fn sliced_and_monolithic_states_decide_alike() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut mono = DecisionPipeline::new(&BackendConfig::enumeration(), false, false);
    let mut sliced = DecisionPipeline::new(&BackendConfig::enumeration(), false, false);
    for _ in 0..500 {
        let n = rng.gen_range(1..5);
        let c1 = gen1_clauses(&mut rng, 4, n, 2);
        let c2 = if rng.gen_bool(0.3) {
            let mut c = c1.clone();
            c.shuffle(&mut rng);
            c
        } else {
            let n = rng.gen_range(1..5);
            gen1_clauses(&mut rng, 4, n, 2)
        };
        let m = |c: &[Term]| state_with(4, 2, c, Representation::Monolithic);
        let s = |c: &[Term]| state_with(4, 2, c, Representation::Sliced);
        let (m1, m2, s1, s2) = (m(&c1), m(&c2), s(&c1), s(&c2));
        let empty = |pl: &mut DecisionPipeline, s: &MultiState| pl.is_empty(s).unwrap().result == Outcome::Empty;
        let (e1, e2) = (empty(&mut mono, &m1), empty(&mut mono, &m2));
        assert_eq!((e1, e2), (empty(&mut sliced, &s1), empty(&mut sliced, &s2)));
        if e1 || e2 {
            continue;
        }
        assert_eq!(
            mono.equal_states(&m1, &m2).unwrap().result,
            sliced.equal_states(&s1, &s2).unwrap().result
        );
        let (l, r) = matched_parts(&s1, &s2).unwrap();
        assert!(is_matching(&l, &r));
    }
}

#[test]
fn permuted_queries_hit_the_cache() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut pl = DecisionPipeline::new(&BackendConfig::enumeration(), true, false);
    for _ in 0..100 {
        let c1 = gen1_clauses(&mut rng, 3, 3, 3);
        let c2 = gen1_clauses(&mut rng, 3, 3, 3);
        let (s1, s2) = (
            state_with(3, 3, &c1, Representation::Monolithic),
            state_with(3, 3, &c2, Representation::Monolithic),
        );
        let first = pl.equal_states(&s1, &s2).unwrap();
        let (mut p1, mut p2) = (c1.clone(), c2.clone());
        p1.shuffle(&mut rng);
        p2.shuffle(&mut rng);
        let again = pl
            .equal_states(
                &state_with(3, 3, &p1, Representation::Monolithic),
                &state_with(3, 3, &p2, Representation::Monolithic),
            )
            .unwrap();
        assert_eq!(first.result, again.result);
        assert_eq!(again.decided_by, DecidedBy::Cache);
    }
    let counts = pl.counts();
    assert_eq!(counts.equal_checks, counts.syntactic_equal + counts.cache_hits + counts.solver_calls);
    assert_eq!(counts.syntactic_equal, 0);
}

#[test]
fn syntactic_equality_implies_semantic_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let en = Enumerator::new(24);
    let mut hits = 0;
    for _ in 0..2000 {
        let n = rng.gen_range(1..4);
        let c1 = gen1_clauses(&mut rng, 3, n, 2);
        let mut c2 = if rng.gen_bool(0.5) {
            c1.clone()
        } else {
            let n = rng.gen_range(1..4);
            gen1_clauses(&mut rng, 3, n, 2)
        };
        c2.shuffle(&mut rng);
        for repr in [Representation::Monolithic, Representation::Sliced] {
            let (s1, s2) = (state_with(3, 2, &c1, repr), state_with(3, 2, &c2, repr));
            if syntactically_equal(&s1, &s2).unwrap() {
                hits += 1;
                assert!(!en.not_subseteq(&build_not_subseteq(&s1, &s2).unwrap()).unwrap());
                assert!(!en.not_subseteq(&build_not_subseteq(&s2, &s1).unwrap()).unwrap());
            }
        }
    }
    assert!(hits > 100);
}

fn brute_sat(c: &Conjunction) -> bool {
    let vars = c.typed_free_vars();
    let total: u32 = vars.iter().map(|(_, w)| w).sum();
    (0..1u64 << total).any(|code| {
        let mut mu = Assignment::new();
        let mut rest = code;
        for &(v, w) in &vars {
            mu.insert(v, rest & ((1 << w) - 1));
            rest >>= w;
        }
        c.clauses().iter().all(|t| evaluate_bool(t, &mu).unwrap())
    })
}

#[test]
fn enumeration_agrees_with_naive_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let en = Enumerator::new(24);
    let mut sat = 0;
    for _ in 0..3000 {
        let w = rng.gen_range(1..=3);
        let n = rng.gen_range(1..5);
        let mut clauses = gen1_clauses(&mut rng, 3, n, w);
        if rng.gen_bool(0.3) {
            // a defining equality for a later generation
            let e = operand(&mut rng, &[var(0, 1), var(1, 1)], w, 2);
            clauses.push(build::eq(Term::var(var(0, 2), w), e));
        }
        let c = Conjunction::from_clauses(clauses);
        let expect = brute_sat(&c);
        sat += usize::from(expect);
        assert_eq!(en.satisfiable(&c).unwrap(), expect, "{c:?}");
    }
    assert!(sat > 300 && sat < 2900);
}

fn corpus() -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cir"))
        .map(|p| {
            (
                p.file_stem().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn pipeline_switches_do_not_change_results() {
    for (name, src) in corpus() {
        if name == "call_then_loop_mod42" {
            continue;
        }
        let p = parse_program(&src).unwrap();
        let mut outcomes = BTreeSet::new();
        for store in [StoreKind::Smt, StoreKind::Partial] {
            for cache_enabled in [false, true] {
                for syntactic_fast_path in [false, true] {
                    let r = explore(
                        &p,
                        &ExploreConfig {
                            store,
                            cache_enabled,
                            syntactic_fast_path,
                            backend: BackendConfig::enumeration(),
                            revalidate_every: cache_enabled.then_some(3),
                            ..ExploreConfig::default()
                        },
                    )
                    .unwrap();
                    assert!(r.stats.is_conserved());
                    if !syntactic_fast_path {
                        assert_eq!(r.stats.syntactic_equal, 0);
                    }
                    if !cache_enabled {
                        assert_eq!(r.stats.cache_hits, 0);
                    }
                    outcomes.insert((format!("{:?}", r.verdict), r.stats.states_stored));
                }
            }
        }
        assert_eq!(outcomes.len(), 1, "{name}: {outcomes:?}");
    }
}

#[test]
fn corpus_parses_and_round_trips() {
    let progs = corpus();
    assert!(progs.len() >= 12);
    for (name, src) in &progs {
        let p = parse_program(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = print_program(&p);
        assert_eq!(parse_program(&printed).unwrap(), p, "{name}");
    }
}

#[test]
fn corpus_program_structure() {
    let progs: HashMap<String, String> = corpus().into_iter().collect();
    let threads = parse_program(&progs["two_threads_mod2"]).unwrap();
    assert_eq!(threads.functions.len(), 2);
    let main = threads.entry_function();
    assert_eq!(main.body.iter().filter(|i| matches!(i, Instr::Spawn { .. })).count(), 2);
    assert_eq!(main.body.iter().filter(|i| matches!(i, Instr::Join)).count(), 2);

    let worked = parse_program(&progs["worked_example"]).unwrap();
    assert_eq!(worked.functions.len(), 1);
    assert_eq!(worked.entry_function().body.len(), 7);

    let empty = parse_program("fn main() {}").unwrap();
    assert_eq!(empty.entry_function().body, vec![Instr::Halt]);
}

proptest! {
    #[test]
    fn slices_are_independent_and_cover_the_input(seed in any::<u64>(), n in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Conjunction::from_clauses(random_clauses(&mut rng, 6, n, 2));
        let parts = slice(&c);
        let s = SlicedParts::from_parts(parts.clone());
        prop_assert!(s.parts_independent());
        let total: usize = parts.iter().map(Conjunction::len).sum();
        prop_assert_eq!(total, c.len());
        let mut rejoined = Conjunction::new();
        for p in &parts {
            rejoined.extend(p);
        }
        prop_assert_eq!(rejoined.canonical_key(), c.canonical_key());
    }
}
