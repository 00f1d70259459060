use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::feedback::FeedbackVector;
use super::log::LogEvent;
use super::{Environment, Transition};
use crate::error::{Error, Result};
use crate::nnkit::init::gaussian_vec;
use crate::nnkit::{sigmoid, Matrix};
use crate::repr::state::{context_vector, hour_and_weekday};
use crate::repr::{history_window, long_term_dim, Catalog, Interaction, LongTermStats, Observation};
use crate::seed::stage_rng;

/// 2023-11-14T22:13:20Z, the origin of simulated time.
pub const BASE_TS: i64 = 1_700_000_000_000;
const WEEK_MS: i64 = 7 * 24 * 3_600_000;
const EVENT_GAP_MS: std::ops::Range<i64> = 30_000..300_000;
const SESSION_GAP_MS: std::ops::Range<i64> = 7_200_000..172_800_000;

/// Knobs of the synthetic population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    pub n_tasks: usize,
    pub n_users: usize,
    pub n_genres: usize,
    pub session_len: usize,
    pub warmup_events: usize,
    pub n_regions: usize,
    pub window: usize,
    pub click_bias: f64,
    pub genre_strength: f64,
    pub taste_std: f64,
    pub install_rate: f64,
    pub play_rate: f64,
    pub drift_rate: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            n_tasks: 3,
            n_users: 200,
            n_genres: 4,
            session_len: 20,
            warmup_events: 30,
            n_regions: 4,
            window: 3,
            click_bias: -1.0,
            genre_strength: 2.5,
            taste_std: 0.25,
            install_rate: 0.6,
            play_rate: 0.6,
            drift_rate: 0.1,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_tasks", self.n_tasks),
            ("n_users", self.n_users),
            ("n_genres", self.n_genres),
            ("session_len", self.session_len),
            ("n_regions", self.n_regions),
            ("window", self.window),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("env.{name} must be positive")));
        }
        for (name, v) in [
            ("install_rate", self.install_rate),
            ("play_rate", self.play_rate),
            ("drift_rate", self.drift_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("env.{name} must be in [0,1], got {v}")));
            }
        }
        for (name, v) in [
            ("click_bias", self.click_bias),
            ("genre_strength", self.genre_strength),
            ("taste_std", self.taste_std),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("env.{name} must be finite")));
            }
        }
        if self.taste_std < 0.0 {
            return Err(Error::Config("env.taste_std must be non-negative".into()));
        }
        Ok(())
    }

    /// `P(task | task - 1)` ceiling; task 0 is unconditional.
    pub fn conditional_rate(&self, task: usize) -> f64 {
        match task {
            0 => 1.0,
            1 => self.install_rate,
            _ => self.play_rate,
        }
    }
}

/// Latent preferences of one simulated user. `affinity[i]` is a weight
/// vector over action features: task 0 drives the click logit, later tasks
/// drive the conditional engagement probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct SimUser {
    pub affinity: Vec<Vec<f64>>,
    pub click_bias: f64,
    /// `rates[i]` caps `P(r_i = 1 | r_{i-1} = 1)`; `rates[0]` is ignored.
    pub rates: Vec<f64>,
    pub drift_rate: f64,
    /// Session-level interest added to the click affinity.
    pub short_term: Vec<f64>,
    /// Feature positions the short-term interest may drift on.
    pub drift_mask: Vec<bool>,
    pub favorite_genre: usize,
    pub region: usize,
}

impl SimUser {
    pub fn new(affinity: Vec<Vec<f64>>, click_bias: f64, rates: Vec<f64>, drift_rate: f64) -> Result<Self> {
        let dim = affinity.first().map_or(0, Vec::len);
        if affinity.is_empty() || affinity.iter().any(|a| a.len() != dim) {
            return Err(Error::Param("affinity vectors must be non-empty with equal dims".into()));
        }
        if affinity.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Param("affinity must be finite".into()));
        }
        if rates.len() != affinity.len() || rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Param("one conditional rate in [0,1] per task required".into()));
        }
        if !(0.0..=1.0).contains(&drift_rate) {
            return Err(Error::Param(format!("drift rate {drift_rate} outside [0,1]")));
        }
        Ok(SimUser {
            affinity,
            click_bias,
            rates,
            drift_rate,
            short_term: vec![0.0; dim],
            drift_mask: vec![true; dim],
            favorite_genre: 0,
            region: 0,
        })
    }

    /// Draws a user for a catalog with the given layout. The click affinity
    /// strongly prefers one genre; installs additionally favor one maker and
    /// an appearance taste; plays favor the genre and a description taste.
    /// Every preference is user-specific with a population mean of zero
    /// across genres and makers, so no item is better for everyone.
    pub fn sample<R: Rng + ?Sized>(params: &EnvParams, catalog: &Catalog, rng: &mut R) -> Self {
        let dims = catalog.dims();
        let dim = dims.total();
        let desc = 0..dims.description;
        let app = dims.description..dims.description + dims.appearance;
        let fb_start = app.end;
        let profile = fb_start + dims.feedback;
        let n_genres = catalog.n_genres();
        let makers = dims.profile - n_genres;

        let favorite_genre = rng.random_range(0..n_genres);
        let favorite_maker = (makers > 0).then(|| rng.random_range(0..makers));
        let gs = params.genre_strength;

        let mut affinity = Vec::with_capacity(params.n_tasks);
        for task in 0..params.n_tasks {
            let mut w = vec![0.0; dim];
            let taste_block = if task == 1 { app.clone() } else { desc.clone() };
            let taste = gaussian_vec(taste_block.len(), params.taste_std, rng);
            w[taste_block].copy_from_slice(&taste);
            for g in 0..n_genres {
                w[profile + g] = if g == favorite_genre { gs } else { -gs / 3.0 };
            }
            if let (1, Some(m)) = (task, favorite_maker) {
                w[profile + n_genres + m] = 1.0;
            }
            affinity.push(w);
        }
        let region = rng.random_range(0..params.n_regions);
        // item-statistics features describe popularity, not content
        let drift_mask = (0..dim).map(|k| !(fb_start..profile).contains(&k)).collect();
        SimUser {
            affinity,
            click_bias: params.click_bias,
            rates: (0..params.n_tasks).map(|t| params.conditional_rate(t)).collect(),
            drift_rate: params.drift_rate,
            short_term: vec![0.0; dim],
            drift_mask,
            favorite_genre,
            region,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.affinity.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn click_probability(user: &SimUser, action: &[f64]) -> f64 {
    let logit = user.click_bias + dot(&user.affinity[0], action) + dot(&user.short_term, action);
    sigmoid(logit)
}

/// `P(r_task = 1 | r_{task-1} = 1)` for `task >= 1`.
pub fn conditional_probability(user: &SimUser, task: usize, action: &[f64]) -> f64 {
    user.rates[task] * sigmoid(dot(&user.affinity[task], action))
}

/// Samples a feedback vector without changing the user. The chain holds by
/// construction since sampling stops at the first negative.
pub fn respond<R: Rng + ?Sized>(user: &SimUser, action: &[f64], rng: &mut R) -> FeedbackVector {
    let mut values = vec![0u8; user.n_tasks()];
    for task in 0..user.n_tasks() {
        let p = if task == 0 {
            click_probability(user, action)
        } else {
            conditional_probability(user, task, action)
        };
        if rng.random::<f64>() < p {
            values[task] = 1;
        } else {
            break;
        }
    }
    FeedbackVector::new(values).expect("sequential sampling keeps the chain")
}

/// Samples the user's response to `action`, then drifts the short-term
/// interest toward the item if it was clicked.
pub fn env_step<R: Rng + ?Sized>(user: &mut SimUser, action: &[f64], rng: &mut R) -> FeedbackVector {
    let fb = respond(user, action, rng);
    if fb.get(0) == 1 {
        let rate = user.drift_rate;
        for ((s, &a), &m) in user.short_term.iter_mut().zip(action).zip(&user.drift_mask) {
            if m {
                *s += rate * (a - *s);
            }
        }
    }
    fb
}

/// A simulated user together with the observable history the recommender
/// sees.
#[derive(Clone, Debug, PartialEq)]
pub struct UserState {
    pub id: String,
    pub sim: SimUser,
    /// Most recent interactions, oldest first, at most `window` long.
    pub recent: Vec<Interaction>,
    pub stats: LongTermStats,
    pub ts: i64,
}

pub fn user_id(k: usize) -> String {
    format!("user-{k:04}")
}

/// Population of simulated users recommended to one item at a time.
#[derive(Clone, Debug)]
pub struct FeaturizedEnv {
    params: EnvParams,
    catalog: Arc<Catalog>,
    users: Vec<UserState>,
    current: usize,
    t: usize,
    rng: ChaCha8Rng,
}

impl FeaturizedEnv {
    /// Draws `n_users` users and plays `warmup_events` uniformly random
    /// recommendations to each so that histories are non-trivial.
    pub fn new(catalog: Arc<Catalog>, params: EnvParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if catalog.n_genres() != params.n_genres {
            return Err(Error::Config(format!(
                "catalog has {} genres, env.n_genres is {}",
                catalog.n_genres(),
                params.n_genres
            )));
        }
        let mut users = Vec::with_capacity(params.n_users);
        for k in 0..params.n_users {
            let mut rng = stage_rng(seed, &format!("user/{k}"));
            let sim = SimUser::sample(&params, &catalog, &mut rng);
            let mut user = UserState {
                id: user_id(k),
                sim,
                recent: Vec::new(),
                stats: LongTermStats::new(params.n_tasks, params.n_genres),
                ts: BASE_TS + rng.random_range(0..WEEK_MS),
            };
            for j in 0..params.warmup_events {
                if j % params.session_len == 0 {
                    start_session(&mut user, &mut rng);
                }
                let item = rng.random_range(0..catalog.len());
                let fb = env_step(&mut user.sim, catalog.item(item).action.as_slice(), &mut rng);
                record(&mut user, &catalog, params.window, item, fb, &mut rng);
            }
            users.push(user);
        }
        Ok(FeaturizedEnv {
            params,
            catalog,
            users,
            current: 0,
            t: 0,
            rng: stage_rng(seed, "env"),
        })
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn current_user(&self) -> usize {
        self.current
    }

    /// Width of the static part of an observation.
    pub fn feature_dim(&self) -> usize {
        long_term_dim(self.params.n_tasks, self.params.n_genres) + 3
    }

    /// Copy holding only user `user`, with its own random stream.
    pub fn fork(&self, user: usize, seed: u64) -> FeaturizedEnv {
        FeaturizedEnv {
            params: self.params.clone(),
            catalog: Arc::clone(&self.catalog),
            users: vec![self.users[user].clone()],
            current: 0,
            t: 0,
            rng: stage_rng(seed, "fork"),
        }
    }

    /// Replaces the response stream, keeping the population.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = stage_rng(seed, "env");
    }

    pub fn observe(&self) -> Observation {
        let u = &self.users[self.current];
        let history = history_window(&u.recent, &self.catalog, self.params.window, self.params.n_tasks);
        let mut features = u.stats.features();
        features.extend(context_vector(u.ts, u.sim.region, self.params.n_regions));
        Observation { history, features }
    }

    pub fn begin_session(&mut self, user: usize) -> Result<Observation> {
        if user >= self.users.len() {
            return Err(Error::OutOfRange {
                what: "user",
                index: user,
                len: self.users.len(),
            });
        }
        self.current = user;
        self.t = 0;
        start_session(&mut self.users[user], &mut self.rng);
        Ok(self.observe())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.catalog.len() {
            return Err(Error::OutOfRange {
                what: "action",
                index: action,
                len: self.catalog.len(),
            });
        }
        Ok(())
    }

    /// Shows one item and returns the full feedback vector, the next
    /// observation and whether the session is over.
    pub fn step_feedback(&mut self, action: usize) -> Result<(FeedbackVector, Observation, bool)> {
        self.check_action(action)?;
        let user = &mut self.users[self.current];
        let fb = env_step(&mut user.sim, self.catalog.item(action).action.as_slice(), &mut self.rng);
        record(user, &self.catalog, self.params.window, action, fb.clone(), &mut self.rng);
        self.t += 1;
        Ok((fb, self.observe(), self.t >= self.params.session_len))
    }

    /// Shows one item per task in a single step; `actions[i]` serves task `i`
    /// and its feedback is returned at position `i`.
    pub fn step_multi(&mut self, actions: &[usize]) -> Result<(Vec<FeedbackVector>, Observation, bool)> {
        if actions.len() != self.params.n_tasks {
            return Err(Error::shape("actions per step", self.params.n_tasks, actions.len()));
        }
        for &a in actions {
            self.check_action(a)?;
        }
        let user = &mut self.users[self.current];
        let mut out = Vec::with_capacity(actions.len());
        for &a in actions {
            let fb = env_step(&mut user.sim, self.catalog.item(a).action.as_slice(), &mut self.rng);
            record(user, &self.catalog, self.params.window, a, fb.clone(), &mut self.rng);
            out.push(fb);
        }
        self.t += 1;
        Ok((out, self.observe(), self.t >= self.params.session_len))
    }

    /// Per task, the catalog items the current user would respond to
    /// positively right now, sampled once per item without side effects.
    pub fn sample_relevance(&mut self) -> Vec<Vec<usize>> {
        let user = &self.users[self.current].sim;
        let mut relevant = vec![Vec::new(); self.params.n_tasks];
        for k in 0..self.catalog.len() {
            let fb = respond(user, self.catalog.item(k).action.as_slice(), &mut self.rng);
            for (task, set) in relevant.iter_mut().enumerate() {
                if fb.get(task) == 1 {
                    set.push(k);
                }
            }
        }
        relevant
    }

    /// Replaces every known user's history with the logged events. Events
    /// for users outside the population are skipped; the count of applied
    /// events is returned.
    pub fn warm_start(&mut self, events: &[LogEvent]) -> Result<usize> {
        let items = self.catalog.index_by_id();
        let ids: HashMap<String, usize> = self.users.iter().enumerate().map(|(k, u)| (u.id.clone(), k)).collect();
        for u in &mut self.users {
            u.recent.clear();
            u.stats = LongTermStats::new(self.params.n_tasks, self.params.n_genres);
        }
        let mut applied = 0;
        for ev in events {
            let Some(&k) = ids.get(&ev.user_id) else {
                continue;
            };
            let &item = items
                .get(ev.item_id.as_str())
                .ok_or_else(|| Error::Param(format!("log references unknown item `{}`", ev.item_id)))?;
            if ev.feedback.n_tasks() != self.params.n_tasks {
                return Err(Error::shape("logged feedback", self.params.n_tasks, ev.feedback.n_tasks()));
            }
            let user = &mut self.users[k];
            user.ts = user.ts.max(ev.ts);
            user.stats.push(&ev.feedback, self.catalog.genre(item), ev.ts);
            push_recent(user, self.params.window, item, ev.feedback.clone(), ev.ts);
            applied += 1;
        }
        Ok(applied)
    }

    /// Plays `sessions_per_user` sessions of uniformly random
    /// recommendations to every user, in user order, and logs each event.
    pub fn simulate_log(&mut self, sessions_per_user: usize) -> Result<Vec<LogEvent>> {
        let mut events = Vec::with_capacity(self.users.len() * sessions_per_user * self.params.session_len);
        for u in 0..self.users.len() {
            for _ in 0..sessions_per_user {
                self.begin_session(u)?;
                for _ in 0..self.params.session_len {
                    let item = self.rng.random_range(0..self.catalog.len());
                    let (ts, region) = (self.users[u].ts, self.users[u].sim.region);
                    let (fb, _, _) = self.step_feedback(item)?;
                    events.push(LogEvent {
                        user_id: self.users[u].id.clone(),
                        ts,
                        item_id: self.catalog.item(item).id.clone(),
                        feedback: fb,
                        context: log_context(ts, region, self.params.n_regions),
                    });
                }
            }
        }
        Ok(events)
    }
}

fn log_context(ts: i64, region: usize, n_regions: usize) -> BTreeMap<String, f64> {
    let (hour, weekday) = hour_and_weekday(ts);
    BTreeMap::from([
        ("hour".to_string(), hour as f64),
        ("weekday".to_string(), weekday as f64),
        ("region".to_string(), region as f64 / n_regions.max(1) as f64),
    ])
}

fn start_session<R: Rng + ?Sized>(user: &mut UserState, rng: &mut R) {
    user.sim.short_term.fill(0.0);
    user.ts += rng.random_range(SESSION_GAP_MS);
}

fn push_recent(user: &mut UserState, window: usize, item: usize, feedback: FeedbackVector, ts: i64) {
    user.recent.push(Interaction { item, feedback, ts });
    if user.recent.len() > window {
        let extra = user.recent.len() - window;
        user.recent.drain(..extra);
    }
}

fn record<R: Rng + ?Sized>(
    user: &mut UserState,
    catalog: &Catalog,
    window: usize,
    item: usize,
    feedback: FeedbackVector,
    rng: &mut R,
) {
    let ts = user.ts;
    user.stats.push(&feedback, catalog.genre(item), ts);
    push_recent(user, window, item, feedback, ts);
    user.ts += rng.random_range(EVENT_GAP_MS);
}

impl Environment for FeaturizedEnv {
    fn n_tasks(&self) -> usize {
        self.params.n_tasks
    }

    fn action_features(&self) -> &Matrix {
        self.catalog.matrix()
    }

    fn reset(&mut self) -> Observation {
        let user = self.rng.random_range(0..self.users.len());
        self.begin_session(user).expect("user index in range")
    }

    fn step(&mut self, task: usize, action: usize) -> Result<Transition> {
        if task >= self.params.n_tasks {
            return Err(Error::OutOfRange {
                what: "task",
                index: task,
                len: self.params.n_tasks,
            });
        }
        let (fb, next, over) = self.step_feedback(action)?;
        Ok(Transition {
            reward: fb.reward(task),
            next,
            terminal: over,
            session_over: over,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::ActionDims;
    use rand::SeedableRng;

    fn catalog() -> Arc<Catalog> {
        Arc::new(Catalog::synthetic(50, ActionDims::default(), 4, 11).unwrap())
    }

    fn small_params() -> EnvParams {
        EnvParams {
            n_users: 10,
            ..EnvParams::default()
        }
    }

    #[test]
    fn zero_conditional_rates_stop_at_click() {
        let mut user = SimUser::new(vec![vec![0.0; 4]; 3], 3.0, vec![1.0, 0.0, 0.0], 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut clicks = 0;
        for _ in 0..1000 {
            let fb = env_step(&mut user, &[1.0, 0.0, 0.0, 0.0], &mut rng);
            assert_eq!(&fb.as_slice()[1..], &[0, 0]);
            clicks += usize::from(fb.get(0));
        }
        assert!(clicks > 900);
    }

    #[test]
    fn large_negative_bias_suppresses_clicks() {
        let mut user = SimUser::new(vec![vec![0.0, 1.0]; 3], -50.0, vec![1.0, 1.0, 1.0], 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clicks = (0..10_000)
            .filter(|_| env_step(&mut user, &[1.0, 0.0], &mut rng).get(0) == 1)
            .count();
        assert!(clicks as f64 / 10_000.0 <= 0.01);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = || {
            let mut env = FeaturizedEnv::new(catalog(), small_params(), 5).unwrap();
            env.reset();
            (0..40).map(|k| env.step_feedback(k % 50).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn observations_have_expected_shape() {
        let mut env = FeaturizedEnv::new(catalog(), small_params(), 1).unwrap();
        let obs = env.reset();
        assert_eq!(obs.history.len(), 3);
        assert!(obs.history.iter().all(|x| x.len() == 52));
        assert_eq!(obs.features.len(), 13);
        assert_eq!(env.feature_dim(), 13);
        let mut over = false;
        let mut steps = 0;
        while !over {
            let t = env.step(2, 0).unwrap();
            assert_eq!(t.terminal, t.session_over);
            over = t.session_over;
            steps += 1;
        }
        assert_eq!(steps, 20);
    }

    #[test]
    fn favorite_genre_is_clicked_more() {
        let cat = catalog();
        let env = FeaturizedEnv::new(Arc::clone(&cat), small_params(), 2).unwrap();
        for u in env.users() {
            let fav: Vec<f64> = (0..cat.len())
                .filter(|&k| cat.genre(k) == u.sim.favorite_genre)
                .map(|k| click_probability(&u.sim, cat.item(k).action.as_slice()))
                .collect();
            let other: Vec<f64> = (0..cat.len())
                .filter(|&k| cat.genre(k) != u.sim.favorite_genre)
                .map(|k| click_probability(&u.sim, cat.item(k).action.as_slice()))
                .collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!(mean(&fav) > 2.0 * mean(&other));
        }
    }

    #[test]
    fn multi_action_step_serves_each_task() {
        let mut env = FeaturizedEnv::new(catalog(), small_params(), 4).unwrap();
        env.reset();
        let (fbs, obs, over) = env.step_multi(&[0, 1, 2]).unwrap();
        assert_eq!(fbs.len(), 3);
        assert!(!over);
        assert_eq!(obs.history.len(), 3);
        assert!(env.step_multi(&[0, 1]).is_err());
        assert!(env.step_multi(&[0, 1, 50]).is_err());
    }

    #[test]
    fn simulated_log_counts_and_orders() {
        let mut env = FeaturizedEnv::new(catalog(), small_params(), 8).unwrap();
        let events = env.simulate_log(2).unwrap();
        assert_eq!(events.len(), 10 * 2 * 20);
        let mut last: HashMap<&str, i64> = HashMap::new();
        for e in &events {
            if let Some(&p) = last.get(e.user_id.as_str()) {
                assert!(e.ts >= p);
            }
            last.insert(&e.user_id, e.ts);
        }
        let mut fresh = FeaturizedEnv::new(catalog(), small_params(), 8).unwrap();
        assert_eq!(fresh.warm_start(&events).unwrap(), events.len());
        assert_eq!(fresh.users()[0].stats.count(), 40);
    }
}
