//! Built-in benchmark programs.

use std::fmt::Write as _;

use serde::Serialize;

use crate::program::{parse_program, Program};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchmarkSpec {
    pub name: String,
    pub source: String,
}

impl BenchmarkSpec {
    pub fn new(name: impl Into<String>, source: String) -> Self {
        BenchmarkSpec { name: name.into(), source }
    }

    pub fn program(&self) -> Result<Program> {
        Ok(parse_program(&self.source)?)
    }
}

fn thread(s: &mut String, tid: usize, body: &[String]) {
    let _ = writeln!(s, "thread {tid}");
    for line in body {
        let _ = writeln!(s, "  {line}");
    }
}

/// `a = read x` ∥ `write x 1` ∥ `write x 2`
pub fn r_w_w() -> BenchmarkSpec {
    BenchmarkSpec::new("r+w+w", "thread 1\n  a = read x\nthread 2\n  write x 1\nthread 3\n  write x 2\n".into())
}

/// `n` threads each reading `x` once; `readers(3)` is r+r+r.
pub fn readers(n: usize) -> BenchmarkSpec {
    let mut s = String::new();
    for t in 1..=n {
        thread(&mut s, t, &["a = read x".into()]);
    }
    let name = if n == 3 { "r+r+r".to_string() } else { format!("readers-{n}") };
    BenchmarkSpec::new(name, s)
}

/// One read of `x` against `n` reads of `x`; `r_nr(2)` is r+rr.
pub fn r_nr(n: usize) -> BenchmarkSpec {
    let mut s = String::new();
    thread(&mut s, 1, &["a = read x".into()]);
    let body: Vec<String> = (0..n).map(|i| format!("r{i} = read x")).collect();
    thread(&mut s, 2, &body);
    let name = if n == 2 { "r+rr".to_string() } else { format!("r+{n}r") };
    BenchmarkSpec::new(name, s)
}

pub fn r_rr() -> BenchmarkSpec {
    r_nr(2)
}

pub fn wrww_rr() -> BenchmarkSpec {
    BenchmarkSpec::new(
        "wrww+rr",
        "thread 1\n  write x 1\n  a = read x\n  write x 2\n  write y 1\n\
         thread 2\n  a = read x\n  if a != 2 goto done\n  b = read y\n  done:\n"
            .into(),
    )
}

/// One read of `x` against a thread writing `1..=n` to `x`.
pub fn hairbrush(n: usize) -> BenchmarkSpec {
    let mut s = String::new();
    thread(&mut s, 1, &["a = read x".into()]);
    let body: Vec<String> = (1..=n).map(|i| format!("write x {i}")).collect();
    thread(&mut s, 2, &body);
    BenchmarkSpec::new(format!("hairbrush-{n}"), s)
}

/// `k` threads each performing `a = read x; write x a+1`, `rounds` times.
pub fn incrementor(k: usize, rounds: usize) -> BenchmarkSpec {
    let mut s = String::new();
    for t in 1..=k {
        let mut body = Vec::new();
        for r in 0..rounds {
            body.push(format!("a{r} = read x"));
            body.push(format!("write x a{r} + 1"));
        }
        thread(&mut s, t, &body);
    }
    let name = if rounds == 1 { format!("incrementor-{k}") } else { format!("incrementor-{k}x{rounds}") };
    BenchmarkSpec::new(name, s)
}

/// `k` threads, each bumping its own counter and then a shared flag.
pub fn fine_counter(k: usize) -> BenchmarkSpec {
    let mut s = String::new();
    for t in 1..=k {
        thread(&mut s, t, &[
            format!("a = read c{t}"),
            format!("write c{t} a + 1"),
            "b = read f".into(),
            "write f b + 1".into(),
        ]);
    }
    BenchmarkSpec::new(format!("fine-counter-{k}"), s)
}

/// `n` reader threads and `m` writer threads on one location.
pub fn reader_writers(n: usize, m: usize) -> BenchmarkSpec {
    let mut s = String::new();
    for t in 1..=n {
        thread(&mut s, t, &["a = read x".into()]);
    }
    for w in 1..=m {
        thread(&mut s, n + w, &[format!("write x {w}")]);
    }
    BenchmarkSpec::new(format!("reader-writers-{n}-{m}"), s)
}

/// `n` single-read threads and `m` threads each writing `x` `k` times. With
/// `readers_first` the readers get the low thread ids and are scheduled before
/// the writers; otherwise the order is swapped. Both orders have the same
/// count but very different exploration cost.
pub fn write_bursts(n: usize, m: usize, k: usize, readers_first: bool) -> BenchmarkSpec {
    let mut s = String::new();
    let mut tid = 1;
    let push_readers = |s: &mut String, tid: &mut usize| {
        for _ in 0..n {
            thread(s, *tid, &["a = read x".into()]);
            *tid += 1;
        }
    };
    if readers_first {
        push_readers(&mut s, &mut tid);
    }
    for w in 0..m {
        let body: Vec<String> = (1..=k).map(|j| format!("write x {}", w * k + j)).collect();
        thread(&mut s, tid, &body);
        tid += 1;
    }
    if !readers_first {
        push_readers(&mut s, &mut tid);
    }
    let order = if readers_first { "rw" } else { "wr" };
    BenchmarkSpec::new(format!("bursts-{order}-{n}-{m}x{k}"), s)
}

/// `m` writer threads followed by one reader; every mo order and rf choice is a distinct leaf.
pub fn writers_reader(m: usize) -> BenchmarkSpec {
    let mut s = String::new();
    for w in 1..=m {
        thread(&mut s, w, &[format!("write x {w}")]);
    }
    thread(&mut s, m + 1, &["a = read x".into()]);
    BenchmarkSpec::new(format!("writers-{m}+r"), s)
}

/// The programs with known counts from the worked examples.
pub fn paper_micro() -> Vec<BenchmarkSpec> {
    let mut v = vec![r_w_w(), readers(3), r_rr(), wrww_rr()];
    v.extend((1..=8).map(hairbrush));
    v
}

/// Scaled families used for the convergence experiments.
pub fn parametric() -> Vec<BenchmarkSpec> {
    vec![
        incrementor(5, 1),
        incrementor(3, 2),
        fine_counter(5),
        reader_writers(3, 4),
        reader_writers(4, 4),
        write_bursts(2, 2, 4, true),
        write_bursts(2, 2, 4, false),
        hairbrush(32),
    ]
}

/// Small programs used for exhaustive cross-checks.
pub fn small_corpus() -> Vec<BenchmarkSpec> {
    let mut v = paper_micro();
    v.extend([
        readers(4),
        r_nr(3),
        incrementor(2, 1),
        incrementor(3, 1),
        incrementor(2, 2),
        fine_counter(2),
        fine_counter(3),
        reader_writers(2, 2),
        reader_writers(2, 3),
        writers_reader(3),
        write_bursts(1, 2, 2, true),
        write_bursts(1, 2, 2, false),
    ]);
    v
}
