use std::collections::HashSet;

use super::{Eligibility, ExposureEvent, ProfileIndex};
use crate::graph::FollowerGraph;
use crate::ingest::{MemeCatalog, TweetRecord};
use crate::{Error, Result, UserId};

pub const ORACLE_MAX_RECORDS: usize = 1000;

/// Slow reference for [`super::extract_events`]: rebuilds every (user, meme)
/// exposure timeline from scratch by rescanning all posts, and materializes
/// every κ = 0 event. Limited to [`ORACLE_MAX_RECORDS`] records.
pub fn brute_force_events(
    records: &[TweetRecord],
    graph: &FollowerGraph,
    catalog: &MemeCatalog,
    profiles: &ProfileIndex,
    eligibility: Eligibility,
) -> Result<Vec<ExposureEvent>> {
    if records.len() > ORACLE_MAX_RECORDS {
        return Err(Error::config(format!(
            "oracle limited to {ORACLE_MAX_RECORDS} records, got {}",
            records.len()
        )));
    }
    let window = catalog.window;
    let tracked: Vec<(usize, &TweetRecord)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| window.tracks(r.timestamp))
        .collect();
    let active: HashSet<UserId> = tracked.iter().map(|(_, r)| r.user).collect();
    let eligible: Vec<UserId> = profiles
        .user_ids()
        .iter()
        .copied()
        .filter(|u| eligibility == Eligibility::AllProfiled || active.contains(u))
        .collect();

    // first post (time, input position) of `user` for `meme`
    let first_post = |user: UserId, meme| {
        tracked
            .iter()
            .find(|(_, r)| r.user == user && r.memes().any(|m| m == meme))
            .map(|&(i, r)| (r.timestamp, i))
    };

    let mut out = Vec::new();
    for entry in catalog.accepted() {
        let meme = entry.id;
        if profiles.meme_index(meme).is_none() {
            continue;
        }
        let Some(&(_, birth_rec)) = tracked.iter().find(|(_, r)| r.memes().any(|m| m == meme))
        else {
            continue;
        };
        let first_poster = birth_rec.user;
        for &f in &eligible {
            if f == first_poster {
                continue;
            }
            let alignment = profiles.alignment(f, meme).expect("profiled");
            let user_class = profiles.user_class(profiles.user_index(f).expect("profiled"));
            let adoption = first_post(f, meme);
            let kappa = graph
                .followees_of(f)
                .into_iter()
                .filter_map(|v| first_post(v, meme))
                .filter(|&(tv, _)| adoption.is_none_or(|(tf, _)| tv < tf))
                .count() as u32;
            for k in 0..kappa {
                out.push(ExposureEvent {
                    meme,
                    user: f,
                    kappa: k,
                    alignment,
                    adopted: false,
                    adoption_time: None,
                    user_class,
                });
            }
            out.push(ExposureEvent {
                meme,
                user: f,
                kappa,
                alignment,
                adopted: adoption.is_some(),
                adoption_time: adoption.map(|a| a.0),
                user_class,
            });
        }
    }
    Ok(out)
}
