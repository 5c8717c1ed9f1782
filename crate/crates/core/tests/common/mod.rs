//! Checks shared by the acceptance target and the integration tests.
#![allow(dead_code)]

use delibsim::agent::{AgentBackend, AgentContext, ChatCompletionAgent, ChatCompletionConfig};
use delibsim::behavior::{PostIntent, VoteDecision};
use delibsim::model::{
    ActorConfig, Archetype, HistoryScope, Persona, Post, PostId, PostKind, Roster, Stance, ToolId, VoteDirection,
    VoteRecord, WordRange,
};
use delibsim::platform::{
    FixtureSearch, HttpPlatform, HttpPlatformConfig, InMemoryPlatform, NewPost, HistoryRequest, Platform,
    PlatformAdapterKind, PlatformError, ToolBox,
};
use delibsim::scheduler::{run_simulation, SimulationSettings};
use delibsim::RandomSource;
use delibsim_stub::{PlatformStub, ReplayStub, StubReply};

pub type Check = (String, Result<(), String>);

fn check(name: &str, f: impl FnOnce() -> Result<(), String>) -> Check {
    (name.to_owned(), f())
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn new_comment(author: &str, t: f64, body: &str) -> NewPost {
    NewPost {
        author: author.into(),
        timestamp: t,
        body: body.into(),
        kind: PostKind::NewComment,
        parent: None,
        stance: None,
        tool_trace: vec![],
    }
}

pub fn reply(author: &str, t: f64, parent: u64, stance: Stance) -> NewPost {
    NewPost {
        author: author.into(),
        timestamp: t,
        body: format!("reply to {parent}"),
        kind: PostKind::Reply,
        parent: Some(PostId(parent)),
        stance: Some(stance),
        tool_trace: vec![],
    }
}

pub fn vote(voter: &str, target: u64, direction: VoteDirection, t: f64) -> VoteRecord {
    VoteRecord {
        voter: voter.into(),
        target: PostId(target),
        direction,
        timestamp: t,
    }
}

fn ids(posts: &[Post]) -> Vec<u64> {
    posts.iter().map(|p| p.post_id.0).collect()
}

/// The operation contract every platform adapter must satisfy. `fresh`
/// returns an empty platform on each call.
pub fn platform_contract(fresh: &mut dyn FnMut() -> Box<dyn Platform>) -> Vec<Check> {
    let mut out = Vec::new();

    out.push(check("empty platform has empty history", || {
        let mut p = fresh();
        let full = p.fetch_history(HistoryRequest::Full).map_err(|e| e.to_string())?;
        let recent = p.fetch_history(HistoryRequest::RecentOnly(5)).map_err(|e| e.to_string())?;
        ensure!(full.is_empty() && recent.is_empty(), "got {} / {} posts", full.len(), recent.len());
        Ok(())
    }));

    out.push(check("first publish gets id 1", || {
        let mut p = fresh();
        let id = p.publish(&new_comment("a", 0.5, "hello")).map_err(|e| e.to_string())?;
        ensure!(id == PostId(1), "first id was {id}");
        Ok(())
    }));

    out.push(check("reply with dangling parent is rejected", || {
        let mut p = fresh();
        p.publish(&new_comment("a", 0.1, "root")).map_err(|e| e.to_string())?;
        match p.publish(&reply("b", 0.2, 42, Stance::Agree)) {
            Err(PlatformError::Validation(_)) => {}
            other => return Err(format!("expected a validation error, got {other:?}")),
        }
        let n = p.fetch_history(HistoryRequest::Full).map_err(|e| e.to_string())?.len();
        ensure!(n == 1, "rejected post was stored ({n} posts)");
        Ok(())
    }));

    out.push(check("self-reply is rejected", || {
        let mut p = fresh();
        p.publish(&new_comment("a", 0.1, "root")).map_err(|e| e.to_string())?;
        ensure!(
            matches!(p.publish(&reply("a", 0.2, 1, Stance::Agree)), Err(PlatformError::Validation(_))),
            "own post accepted as parent"
        );
        Ok(())
    }));

    out.push(check("full and recent history after three publishes", || {
        let mut p = fresh();
        p.publish(&new_comment("a", 0.25, "one")).map_err(|e| e.to_string())?;
        p.publish(&new_comment("b", 1.125, "two")).map_err(|e| e.to_string())?;
        p.publish(&reply("c", 2.0625, 1, Stance::Disagree)).map_err(|e| e.to_string())?;
        let full = p.fetch_history(HistoryRequest::Full).map_err(|e| e.to_string())?;
        ensure!(ids(&full) == vec![1, 2, 3], "full ids {:?}", ids(&full));
        ensure!(full[1].body == "two" && full[1].timestamp == 1.125, "post 2 altered: {:?}", full[1]);
        ensure!(
            full[2].parent == Some(PostId(1)) && full[2].stance == Some(Stance::Disagree),
            "reply fields altered: {:?}",
            full[2]
        );
        let recent = p.fetch_history(HistoryRequest::RecentOnly(2)).map_err(|e| e.to_string())?;
        ensure!(ids(&recent) == vec![2, 3], "recent ids {:?}", ids(&recent));
        let wide = p.fetch_history(HistoryRequest::RecentOnly(10)).map_err(|e| e.to_string())?;
        ensure!(ids(&wide) == vec![1, 2, 3], "recent(10) ids {:?}", ids(&wide));
        Ok(())
    }));

    out.push(check("timestamps survive the adapter exactly", || {
        let mut p = fresh();
        let t = 7.123_456_789_012_345;
        p.publish(&new_comment("a", t, "precise")).map_err(|e| e.to_string())?;
        let got = p.fetch_history(HistoryRequest::Full).map_err(|e| e.to_string())?[0].timestamp;
        ensure!(got.to_bits() == t.to_bits(), "{got} != {t}");
        Ok(())
    }));

    out.push(check("second vote by the same voter is rejected", || {
        let mut p = fresh();
        for i in 0..5 {
            p.publish(&new_comment("author", i as f64, "x")).map_err(|e| e.to_string())?;
        }
        p.vote(&vote("a2", 5, VoteDirection::Up, 6.0)).map_err(|e| e.to_string())?;
        match p.vote(&vote("a2", 5, VoteDirection::Down, 6.5)) {
            Err(PlatformError::Duplicate { .. }) => Ok(()),
            other => Err(format!("expected a duplicate error, got {other:?}")),
        }
    }));

    out.push(check("vote on a missing post is a validation error", || {
        let mut p = fresh();
        p.publish(&new_comment("a", 0.0, "x")).map_err(|e| e.to_string())?;
        match p.vote(&vote("b", 999, VoteDirection::Up, 1.0)) {
            Err(PlatformError::Validation(_)) => Ok(()),
            other => Err(format!("expected a validation error, got {other:?}")),
        }
    }));

    out.push(check("self-vote is rejected", || {
        let mut p = fresh();
        p.publish(&new_comment("a", 0.0, "x")).map_err(|e| e.to_string())?;
        ensure!(
            matches!(p.vote(&vote("a", 1, VoteDirection::Up, 1.0)), Err(PlatformError::Validation(_))),
            "self-vote accepted"
        );
        Ok(())
    }));

    out.push(check("distinct voters on one post are all recorded", || {
        let mut p = fresh();
        p.publish(&new_comment("a", 0.0, "x")).map_err(|e| e.to_string())?;
        for (i, voter) in ["b", "c", "d", "e"].iter().enumerate() {
            p.vote(&vote(voter, 1, VoteDirection::Up, 1.0 + i as f64))
                .map_err(|e| format!("voter {voter}: {e}"))?;
        }
        Ok(())
    }));

    out.push(check("156 publishes get gapless ids", || {
        let mut p = fresh();
        for i in 0..156u64 {
            let id = p
                .publish(&new_comment(if i % 2 == 0 { "a" } else { "b" }, i as f64 * 0.1, "x"))
                .map_err(|e| e.to_string())?;
            ensure!(id == PostId(i + 1), "publish {i} got id {id}");
        }
        let all = p.fetch_history(HistoryRequest::Full).map_err(|e| e.to_string())?;
        ensure!(ids(&all) == (1..=156).collect::<Vec<_>>(), "ids not gapless");
        Ok(())
    }));

    out
}

/// An HTTP adapter bound to its own stub server, which lives as long as it.
pub struct StubbedPlatform {
    pub stub: PlatformStub,
    inner: HttpPlatform,
}

impl StubbedPlatform {
    pub fn start() -> Self {
        let stub = PlatformStub::start();
        let inner = HttpPlatform::with_token(
            HttpPlatformConfig {
                base_url: stub.base_url().to_owned(),
                timeout_secs: 5.0,
                ..Default::default()
            },
            None,
        );
        StubbedPlatform { stub, inner }
    }
}

impl Platform for StubbedPlatform {
    fn kind(&self) -> PlatformAdapterKind {
        self.inner.kind()
    }
    fn publish(&mut self, post: &NewPost) -> Result<PostId, PlatformError> {
        self.inner.publish(post)
    }
    fn vote(&mut self, vote: &VoteRecord) -> Result<(), PlatformError> {
        self.inner.vote(vote)
    }
    fn fetch_history(&mut self, scope: HistoryRequest) -> Result<Vec<Post>, PlatformError> {
        self.inner.fetch_history(scope)
    }
}

pub fn in_memory_contract() -> Vec<Check> {
    platform_contract(&mut || Box::new(InMemoryPlatform::new()))
}

pub fn http_contract() -> Vec<Check> {
    let mut out = platform_contract(&mut || Box::new(StubbedPlatform::start()));

    out.push(check("bearer token is sent and a wrong one is refused", || {
        let stub = PlatformStub::with_token("s3cret");
        let config = HttpPlatformConfig {
            base_url: stub.base_url().to_owned(),
            timeout_secs: 5.0,
            ..Default::default()
        };
        let mut good = HttpPlatform::with_token(config.clone(), Some("s3cret".into()));
        good.publish(&new_comment("a", 0.0, "x")).map_err(|e| e.to_string())?;
        let mut bad = HttpPlatform::with_token(config, Some("wrong".into()));
        match bad.publish(&new_comment("a", 1.0, "y")) {
            Err(PlatformError::Unauthorized(_)) => {}
            other => return Err(format!("expected an unauthorized error, got {other:?}")),
        }
        let auth = stub.requests()[0].authorization.clone();
        ensure!(auth.as_deref() == Some("Bearer s3cret"), "authorization header {auth:?}");
        Ok(())
    }));

    out.push(check("unreachable server is a fatal transport error", || {
        let closed = std::net::TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
        let addr = closed.local_addr().map_err(|e| e.to_string())?;
        drop(closed);
        let mut p = HttpPlatform::with_token(
            HttpPlatformConfig {
                base_url: format!("http://{addr}"),
                timeout_secs: 2.0,
                ..Default::default()
            },
            None,
        );
        match p.publish(&new_comment("a", 0.0, "x")) {
            Err(e @ PlatformError::Transport(_)) if e.is_fatal() => Ok(()),
            other => Err(format!("expected a transport error, got {other:?}")),
        }
    }));

    out.push(check("wire records match what was published", || {
        let mut p = StubbedPlatform::start();
        p.publish(&new_comment("a", 0.5, "hello")).map_err(|e| e.to_string())?;
        p.vote(&vote("b", 1, VoteDirection::Down, 0.75)).map_err(|e| e.to_string())?;
        let posts = p.stub.posts();
        let votes = p.stub.votes();
        ensure!(posts.len() == 1 && posts[0]["author"] == "a" && posts[0]["body"] == "hello", "posts {posts:?}");
        ensure!(votes.len() == 1 && votes[0]["voter"] == "b" && votes[0]["direction"] == "down", "votes {votes:?}");
        Ok(())
    }));

    out
}

pub fn casual(id: &str) -> ActorConfig {
    ActorConfig {
        actor_id: id.into(),
        persona: Persona {
            actor_name: format!("Casual {id}"),
            archetype: Archetype::CasualUser,
            biography: "Lives in the city centre.".into(),
            tone: "polite, informal".into(),
            content_style: "anecdotal".into(),
            response_length: WordRange::new(10, 20),
            history_scope: HistoryScope::RecentOnly,
            core_beliefs: vec!["Cooling centres should open earlier.".into()],
        },
        lambda_post: 1.0,
        lambda_action: 1.0,
        p_reply: 0.5,
        theta_action: 0.3,
        candidate_count: 3,
        tools: ToolId::BASE_SUITE.to_vec(),
    }
}

pub fn expert(id: &str) -> ActorConfig {
    let mut a = casual(id);
    a.persona.actor_name = "Expert".into();
    a.persona.archetype = Archetype::Expert;
    a.persona.response_length = WordRange::new(50, 100);
    a.persona.history_scope = HistoryScope::Full;
    a.tools.push(ToolId::WebSearch);
    a
}

fn post(id: u64, author: &str, body: &str) -> Post {
    Post {
        post_id: PostId(id),
        author: author.into(),
        timestamp: id as f64,
        body: body.into(),
        kind: PostKind::NewComment,
        parent: None,
        stance: None,
        tool_trace: vec![],
    }
}

fn context<'a>(actor: &'a ActorConfig, roster: &'a Roster, posts: &'a [Post]) -> AgentContext<'a> {
    AgentContext {
        actor_id: &actor.actor_id,
        persona: &actor.persona,
        topic: "Extreme weather",
        visible_posts: posts.iter().collect(),
        own_post_history: vec![],
        own_action_history: vec![],
        provisioned_tools: &actor.tools,
        roster,
        now: 10.0,
    }
}

pub struct ChatFixture(serde_json::Value);

impl ChatFixture {
    pub fn load() -> Self {
        let text = include_str!("../../fixtures/chat_replies.json");
        ChatFixture(serde_json::from_str(text).expect("chat fixture parses"))
    }

    pub fn raw(&self, key: &str) -> String {
        self.0[key].as_str().unwrap_or_else(|| panic!("fixture key {key}")).to_owned()
    }

    /// The `body` inside a recorded answer.
    pub fn body(&self, key: &str) -> String {
        body_of(&self.raw(key))
    }

    pub fn session(&self) -> Vec<String> {
        self.0["session"]
            .as_array()
            .expect("session array")
            .iter()
            .map(|v| v.as_str().unwrap().to_owned())
            .collect()
    }
}

pub fn body_of(answer: &str) -> String {
    let start = answer.find('{').unwrap();
    let end = answer.rfind('}').unwrap();
    let v: serde_json::Value = serde_json::from_str(&answer[start..=end]).unwrap();
    v["body"].as_str().unwrap().to_owned()
}

fn chat_agent(stub: &ReplayStub) -> ChatCompletionAgent {
    let config = ChatCompletionConfig {
        endpoint: format!("{}/v1/chat/completions", stub.base_url()),
        model: "fixture-model".into(),
        timeout_secs: 5.0,
        transport_retries: 0,
        ..Default::default()
    };
    ChatCompletionAgent::with_api_key(config, Some("test-key".into()))
}

/// The chat backend against a stub that replays recorded answers.
pub fn chat_fixture_checks() -> Vec<Check> {
    let fx = ChatFixture::load();
    let search = FixtureSearch::bundled();
    let casual_a = casual("casual_a");
    let expert_e = expert("expert_e");
    let others = [casual("b"), casual("c")];
    let roster = Roster::from_actors(&[casual_a.clone(), expert_e.clone(), others[0].clone(), others[1].clone()]);
    let posts = vec![
        post(1, "b", "Cooling centres are a waste of money."),
        post(2, "c", "Libraries should double as cooling centres."),
        post(3, "b", "Shade trees on every bus route, please."),
    ];
    let mut out = Vec::new();

    out.push(check("new comment body equals the fixture", || {
        let stub = ReplayStub::start([StubReply::chat(&fx.raw("new_comment"))]);
        let mut agent = chat_agent(&stub);
        let ctx = context(&casual_a, &roster, &posts);
        let mut tools = ToolBox::new(&casual_a.tools, &search);
        let body = agent
            .generate_content(&ctx, &PostIntent::new_comment(), None, &mut tools)
            .map_err(|e| e.to_string())?;
        ensure!(body == fx.body("new_comment"), "body {body:?}");
        let reqs = stub.requests();
        ensure!(reqs.len() == 1, "{} requests", reqs.len());
        ensure!(
            reqs[0].authorization.as_deref() == Some("Bearer test-key"),
            "authorization header {:?}",
            reqs[0].authorization
        );
        let sent = reqs[0].json().ok_or("request is not JSON")?;
        ensure!(sent["model"] == "fixture-model", "model {}", sent["model"]);
        ensure!(
            sent["messages"][0]["role"] == "system" && sent["messages"][1]["role"] == "user",
            "roles {}",
            sent["messages"]
        );
        ensure!(
            sent["messages"][1]["content"].as_str().unwrap_or("").contains("Libraries should double"),
            "history missing from user prompt"
        );
        Ok(())
    }));

    out.push(check("reply target and fenced reply body equal the fixture", || {
        let stub = ReplayStub::start([StubReply::chat(&fx.raw("reply_target")), StubReply::chat(&fx.raw("reply_body"))]);
        let mut agent = chat_agent(&stub);
        let ctx = context(&casual_a, &roster, &posts);
        let pool: Vec<&Post> = posts.iter().collect();
        let intent = agent.select_reply_target(&ctx, &pool).map_err(|e| e.to_string())?;
        ensure!(intent == PostIntent::reply(PostId(2), Stance::Disagree), "intent {intent:?}");
        let mut tools = ToolBox::new(&casual_a.tools, &search);
        let body = agent
            .generate_content(&ctx, &intent, Some(&posts[1]), &mut tools)
            .map_err(|e| e.to_string())?;
        ensure!(body == fx.body("reply_body"), "body {body:?}");
        Ok(())
    }));

    out.push(check("vote decisions equal the fixture", || {
        let stub = ReplayStub::start([StubReply::chat(&fx.raw("votes"))]);
        let mut agent = chat_agent(&stub);
        let ctx = context(&casual_a, &roster, &posts);
        let pool: Vec<&Post> = posts.iter().collect();
        let got: Vec<(u64, VoteDirection)> = agent
            .select_vote_candidates(&ctx, &pool, 3)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|d: VoteDecision| (d.target.0, d.direction))
            .collect();
        ensure!(
            got == vec![(3, VoteDirection::Up), (1, VoteDirection::Down)],
            "decisions {got:?}"
        );
        Ok(())
    }));

    out.push(check("tool round trip feeds fixture search results back", || {
        let stub = ReplayStub::start([StubReply::chat(&fx.raw("tool_call")), StubReply::chat(&fx.raw("after_tool"))]);
        let mut agent = chat_agent(&stub);
        let ctx = context(&expert_e, &roster, &posts);
        let mut tools = ToolBox::new(&expert_e.tools, &search);
        let body = agent
            .generate_content(&ctx, &PostIntent::new_comment(), None, &mut tools)
            .map_err(|e| e.to_string())?;
        ensure!(body == fx.body("after_tool"), "body {body:?}");
        let trace = tools.into_trace();
        ensure!(trace.len() == 1 && trace[0].query == "heat mortality", "trace {trace:?}");
        let reqs = stub.requests();
        ensure!(reqs.len() == 2, "{} requests", reqs.len());
        let title = delibsim::platform::SearchProvider::search(&search, "heat mortality").unwrap()[0]
            .title
            .clone();
        ensure!(reqs[1].body.contains(&title), "search results not sent back");
        Ok(())
    }));

    out.push(check("malformed answer triggers one reformat retry", || {
        let stub = ReplayStub::start([StubReply::chat(&fx.raw("malformed")), StubReply::chat(&fx.raw("votes"))]);
        let mut agent = chat_agent(&stub);
        let ctx = context(&casual_a, &roster, &posts);
        let pool: Vec<&Post> = posts.iter().collect();
        let got = agent.select_vote_candidates(&ctx, &pool, 3).map_err(|e| e.to_string())?;
        ensure!(got.len() == 2, "decisions {got:?}");
        let second = stub.requests()[1].json().ok_or("request is not JSON")?;
        let n = second["messages"].as_array().map_or(0, Vec::len);
        ensure!(n == 4, "retry carried {n} messages");
        Ok(())
    }));

    out.push(check("two malformed answers fail the call", || {
        let stub = ReplayStub::start([StubReply::chat(&fx.raw("malformed")), StubReply::chat(&fx.raw("malformed"))]);
        let mut agent = chat_agent(&stub);
        let ctx = context(&casual_a, &roster, &posts);
        let pool: Vec<&Post> = posts.iter().collect();
        ensure!(agent.select_vote_candidates(&ctx, &pool, 3).is_err(), "accepted malformed output");
        ensure!(stub.requests().len() == 2, "{} requests", stub.requests().len());
        Ok(())
    }));

    out.push(check("one-actor run reproduces the recorded session", || {
        let session = fx.session();
        let stub = ReplayStub::start(session.iter().map(|s| StubReply::chat(s)));
        let mut actor = casual("solo");
        actor.lambda_post = 0.5;
        let actors = vec![actor];
        let mut agents: Vec<Box<dyn AgentBackend>> = vec![Box::new(chat_agent(&stub))];
        let mut platform = delibsim::platform::InMemoryPlatform::new();
        let outcome = run_simulation(
            &actors,
            &SimulationSettings::new(10.0),
            &mut agents,
            &mut platform,
            &search,
            &RandomSource::new(11),
        )
        .map_err(|e| e.to_string())?;
        let bodies: Vec<&str> = outcome.history.posts.iter().map(|p| p.body.as_str()).collect();
        ensure!(!bodies.is_empty(), "no posts");
        ensure!(bodies.len() <= session.len(), "{} posts for {} answers", bodies.len(), session.len());
        for (i, b) in bodies.iter().enumerate() {
            ensure!(*b == body_of(&session[i]), "post {} body {b:?}", i + 1);
        }
        ensure!(outcome.counts.agent_errors == 0, "{} agent errors", outcome.counts.agent_errors);
        Ok(())
    }));

    out
}
