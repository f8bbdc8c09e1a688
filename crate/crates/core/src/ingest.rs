//! Dataset ingestion: ratings CSV files (movies as rows, users as columns)
//! and the sparse instance text format written by [`crate::datagen`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::completion::SparseObservations;
use crate::datagen::partition_columns;
use crate::error::{Error, Result};

/// Ratings span [0.5, 5], so the NMAE denominator is 4.5.
pub const RATING_MIN: f64 = 0.5;
pub const RATING_MAX: f64 = 5.0;

/// Dense re-indexing of the sparse external ids: `movie_ids[row]` and
/// `user_ids[col]` recover the original ids (both sorted ascending).
#[derive(Clone, Debug, Default)]
pub struct IdMaps {
    pub movie_ids: Vec<u64>,
    pub user_ids: Vec<u64>,
}

/// Parses a ratings CSV with header `userId,movieId,rating,timestamp` into a
/// movies×users observation matrix.
///
/// Ratings outside [0.5, 5] and malformed lines are errors (with the line
/// number); a duplicated (user, movie) pair keeps the last value and warns on
/// stderr. Row/column order is by ascending external id, so the result is
/// independent of file order.
pub fn parse_ratings(path: &Path) -> Result<(SparseObservations, IdMaps)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file".into(),
            })
        }
    };
    let normalized: String = header.chars().filter(|c| !c.is_whitespace()).collect();
    if !normalized.starts_with("userId,movieId,rating,timestamp") {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header userId,movieId,rating,timestamp, got {header:?}"),
        });
    }

    let mut latest: HashMap<(u64, u64), f64> = HashMap::new();
    let mut duplicates = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut field = |name: &str| {
            fields.next().ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("missing field {name}"),
            })
        };
        let user: u64 = field("userId")?.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: "bad userId".into(),
        })?;
        let movie: u64 = field("movieId")?.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: "bad movieId".into(),
        })?;
        let rating: f64 = field("rating")?.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: "bad rating".into(),
        })?;
        field("timestamp")?;
        if !(RATING_MIN..=RATING_MAX).contains(&rating) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("rating {rating} outside [{RATING_MIN}, {RATING_MAX}]"),
            });
        }
        if latest.insert((user, movie), rating).is_some() {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        eprintln!("warning: {duplicates} duplicate (user, movie) ratings; kept the last of each");
    }

    let mut user_ids: Vec<u64> = latest.keys().map(|&(u, _)| u).collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    let mut movie_ids: Vec<u64> = latest.keys().map(|&(_, m)| m).collect();
    movie_ids.sort_unstable();
    movie_ids.dedup();
    let user_index: HashMap<u64, usize> =
        user_ids.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let movie_index: HashMap<u64, usize> =
        movie_ids.iter().enumerate().map(|(i, &m)| (m, i)).collect();

    let triples: Vec<(usize, usize, f64)> = latest
        .iter()
        .map(|(&(u, m), &v)| (movie_index[&m], user_index[&u], v))
        .collect();
    let obs = SparseObservations::from_triples(movie_ids.len(), user_ids.len(), &triples)?;
    Ok((
        obs,
        IdMaps {
            movie_ids,
            user_ids,
        },
    ))
}

/// Seeded disjoint split with `|test| = round(fraction * |obs|)`.
pub fn split_train_test(
    obs: &SparseObservations,
    fraction: f64,
    seed: u64,
) -> Result<(SparseObservations, SparseObservations)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must be in [0, 1), got {fraction}"
        )));
    }
    let entries: Vec<(usize, usize, f64)> = obs.iter().collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_test = (fraction * entries.len() as f64).round() as usize;
    let mut test = Vec::with_capacity(n_test);
    let mut train = Vec::with_capacity(entries.len() - n_test);
    for (pos, &e) in order.iter().enumerate() {
        if pos < n_test {
            test.push(entries[e]);
        } else {
            train.push(entries[e]);
        }
    }
    Ok((
        SparseObservations::from_triples(obs.n_rows(), obs.n_cols(), &train)?,
        SparseObservations::from_triples(obs.n_rows(), obs.n_cols(), &test)?,
    ))
}

/// Splits an observation matrix into per-agent blocks over the given global
/// column ranges, re-indexing columns locally. Every agent keeps all rows.
pub fn partition_by_columns(
    obs: &SparseObservations,
    ranges: &[std::ops::Range<usize>],
) -> Result<Vec<SparseObservations>> {
    if ranges.last().map(|r| r.end) != Some(obs.n_cols())
        || ranges.first().map(|r| r.start) != Some(0)
    {
        return Err(Error::InvalidConfig(
            "column ranges must cover all columns".into(),
        ));
    }
    let mut per_agent: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); ranges.len()];
    let mut agent = 0usize;
    for (row, col, value) in obs.iter() {
        while !ranges[agent].contains(&col) {
            // Entries arrive in ascending column order, but a later column
            // can belong to an earlier agent only if ranges overlap, which
            // partition_columns rules out.
            agent = (agent + 1) % ranges.len();
        }
        per_agent[agent].push((row, col - ranges[agent].start, value));
    }
    ranges
        .iter()
        .zip(per_agent)
        .map(|(range, triples)| {
            SparseObservations::from_triples(obs.n_rows(), range.end - range.start, &triples)
        })
        .collect()
}

/// Normalized mean absolute error for ratings in [0.5, 5]: MAE / 4.5.
pub fn nmae(mae: f64) -> f64 {
    mae / (RATING_MAX - RATING_MIN)
}

/// A problem loaded from the sparse instance text format.
#[derive(Clone, Debug)]
pub struct LoadedInstance {
    pub blocks: Vec<SparseObservations>,
    pub heldout: Vec<SparseObservations>,
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub col_ranges: Vec<std::ops::Range<usize>>,
}

/// Reads the `m n r n_agents` + `row col value split agent` format written by
/// [`crate::datagen::write_instance`].
pub fn parse_instance(path: &Path) -> Result<LoadedInstance> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file".into(),
            })
        }
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header: m n r n_agents".into(),
        });
    }
    let parse_usize = |s: &str, what: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad {what}: {s:?}"),
        })
    };
    let m = parse_usize(parts[0], "m")?;
    let n = parse_usize(parts[1], "n")?;
    let rank = parse_usize(parts[2], "r")?;
    let n_agents = parse_usize(parts[3], "n_agents")?;
    let ranges = partition_columns(n, n_agents)?;

    let mut train: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_agents];
    let mut test: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_agents];
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::Parse {
            line: lineno,
            msg: format!("bad {what}: {line:?}"),
        };
        let row: usize = fields[0].parse().map_err(|_| bad("row"))?;
        let col: usize = fields[1].parse().map_err(|_| bad("col"))?;
        let value: f64 = fields[2].parse().map_err(|_| bad("value"))?;
        let agent: usize = fields[4].parse().map_err(|_| bad("agent"))?;
        if row >= m || col >= n {
            return Err(bad("index range"));
        }
        if agent < 1 || agent > n_agents {
            return Err(bad("agent id"));
        }
        let range = &ranges[agent - 1];
        if !range.contains(&col) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("column {col} outside agent {agent}'s range {range:?}"),
            });
        }
        let local = (row, col - range.start, value);
        match fields[3] {
            "train" => train[agent - 1].push(local),
            "test" => test[agent - 1].push(local),
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("split must be train or test, got {other:?}"),
                })
            }
        }
    }

    let mut blocks = Vec::with_capacity(n_agents);
    let mut heldout = Vec::with_capacity(n_agents);
    for (agent, range) in ranges.iter().enumerate() {
        let width = range.end - range.start;
        blocks.push(SparseObservations::from_triples(m, width, &train[agent])?);
        heldout.push(SparseObservations::from_triples(m, width, &test[agent])?);
    }
    Ok(LoadedInstance {
        blocks,
        heldout,
        m,
        n,
        rank,
        col_ranges: ranges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::io::Write;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.csv");
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_small_ratings_file() {
        let (_dir, path) = write_tmp(
            "userId,movieId,rating,timestamp\n\
             7,100,4.0,111\n\
             3,100,2.5,222\n\
             7,200,5.0,333\n",
        );
        let (obs, maps) = parse_ratings(&path).unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(maps.user_ids, vec![3, 7]);
        assert_eq!(maps.movie_ids, vec![100, 200]);
        // movies are rows, users are columns
        assert_eq!(obs.n_rows(), 2);
        assert_eq!(obs.n_cols(), 2);
        let entries: Vec<_> = obs.iter().collect();
        assert!(entries.contains(&(0, 0, 2.5))); // movie 100, user 3
        assert!(entries.contains(&(0, 1, 4.0))); // movie 100, user 7
        assert!(entries.contains(&(1, 1, 5.0))); // movie 200, user 7
    }

    #[test]
    fn reports_malformed_line_number() {
        let (_dir, path) = write_tmp(
            "userId,movieId,rating,timestamp\n\
             1,1,4.0,0\n\
             abc,1,4.0,0\n",
        );
        match parse_ratings(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_rating() {
        let (_dir, path) = write_tmp("userId,movieId,rating,timestamp\n1,1,5.5,0\n");
        assert!(matches!(
            parse_ratings(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_keeps_last() {
        let (_dir, path) = write_tmp(
            "userId,movieId,rating,timestamp\n\
             1,1,4.0,0\n\
             1,1,2.0,1\n",
        );
        let (obs, _) = parse_ratings(&path).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs.iter().next().unwrap().2, 2.0);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let triples: Vec<(usize, usize, f64)> = (0..10).map(|i| (i, 0, i as f64)).collect();
        let obs = SparseObservations::from_triples(10, 1, &triples).unwrap();
        let (train, test) = split_train_test(&obs, 0.2, 1).unwrap();
        assert_eq!(test.len(), 2);
        assert_eq!(train.len(), 8);

        let (train0, test0) = split_train_test(&obs, 0.0, 1).unwrap();
        assert_eq!(test0.len(), 0);
        assert_eq!(train0.len(), 10);
    }

    #[test]
    fn split_is_disjoint_on_larger_draw() {
        let mut triples = Vec::new();
        for j in 0..100 {
            for i in 0..100 {
                if (i + 3 * j) % 7 == 0 {
                    triples.push((i, j, (i * j) as f64));
                }
            }
        }
        let obs = SparseObservations::from_triples(100, 100, &triples).unwrap();
        let (train, test) = split_train_test(&obs, 0.25, 9).unwrap();
        assert_eq!(train.len() + test.len(), obs.len());
        let train_set: HashSet<(usize, usize)> = train.iter().map(|(i, j, _)| (i, j)).collect();
        let test_set: HashSet<(usize, usize)> = test.iter().map(|(i, j, _)| (i, j)).collect();
        assert!(train_set.is_disjoint(&test_set));
    }

    #[test]
    fn user_partition_assigns_each_user_once() {
        let (_dir, path) = write_tmp(
            "userId,movieId,rating,timestamp\n\
             1,10,1.0,0\n2,10,2.0,0\n3,10,3.0,0\n4,10,4.0,0\n5,10,5.0,0\n\
             1,20,1.5,0\n3,20,3.5,0\n5,20,4.5,0\n",
        );
        let (obs, maps) = parse_ratings(&path).unwrap();
        let ranges = partition_columns(obs.n_cols(), 2).unwrap();
        let blocks = partition_by_columns(&obs, &ranges).unwrap();
        assert_eq!(blocks.len(), 2);
        // every agent sees all movies (rows), users split once
        assert!(blocks.iter().all(|b| b.n_rows() == obs.n_rows()));
        let total_cols: usize = blocks.iter().map(|b| b.n_cols()).sum();
        assert_eq!(total_cols, maps.user_ids.len());
        let total_entries: usize = blocks.iter().map(|b| b.len()).sum();
        assert_eq!(total_entries, obs.len());
    }

    #[test]
    fn nmae_values() {
        assert_eq!(nmae(4.5), 1.0);
        assert_eq!(nmae(0.0), 0.0);
        // A rank-5 test NMAE of 0.1507 corresponds to MAE of about 0.678.
        assert!((nmae(0.678) - 0.1507).abs() < 1e-3);
    }

    #[test]
    fn instance_round_trip() {
        let spec = crate::datagen::SyntheticSpec {
            m: 12,
            n: 18,
            r: 2,
            os: 2.5,
            noise_std: 0.0,
            cond: None,
            test_fraction: 0.2,
            n_agents: 3,
            seed: 17,
        };
        let inst = crate::datagen::generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instance.txt");
        crate::datagen::write_instance(&inst, &path).unwrap();
        let loaded = parse_instance(&path).unwrap();
        assert_eq!(loaded.m, 12);
        assert_eq!(loaded.n, 18);
        assert_eq!(loaded.rank, 2);
        assert_eq!(loaded.col_ranges, inst.col_ranges);
        for (a, b) in inst.blocks.iter().zip(loaded.blocks.iter()) {
            let av: Vec<_> = a.iter().collect();
            let bv: Vec<_> = b.iter().collect();
            assert_eq!(av, bv);
        }
        for (a, b) in inst.heldout.iter().zip(loaded.heldout.iter()) {
            assert_eq!(a.iter().collect::<Vec<_>>(), b.iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn instance_parser_rejects_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "4 4 1 2\n0 0 1.0 train 9\n").unwrap();
        assert!(matches!(
            parse_instance(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        std::fs::write(&path, "4 4 1 2\n0 0 1.0 validation 1\n").unwrap();
        assert!(matches!(
            parse_instance(&path),
            Err(Error::Parse { line: 2, .. })
        ));
        // column 3 belongs to agent 2 (ranges 0..2, 2..4)
        std::fs::write(&path, "4 4 1 2\n0 3 1.0 train 1\n").unwrap();
        assert!(matches!(
            parse_instance(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
