mod common;

use std::time::Duration;

use parkbarrier::cloud::http::{shared, ServerHandle, RECEIVE_TS_HEADER};
use parkbarrier::cloud::CloudService;
use serde_json::{json, Value};

struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(base: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(5)))
            .http_status_as_error(false)
            .build()
            .into();
        Client { base, agent }
    }

    fn post(&self, path: &str, now: u64, body: Value) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(&format!("{}/api/v1{path}", self.base))
            .header("content-type", "application/json")
            .header(RECEIVE_TS_HEADER, &now.to_string())
            .send(body.to_string())
            .unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(&format!("{}/api/v1{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }
}

fn report(seq: u64, occ: bool) -> Value {
    json!({"type": "report", "sid": "s1", "tid": "t-s1", "seq": seq, "ts": seq * 1000, "occ": occ,
           "conf": 0.9, "rsn": if occ { "visual" } else { "none" }, "dist": 40.0, "tilt": 0.0, "pwr": 0.92})
}

fn heartbeat(sid: &str, seq: u64) -> Value {
    json!({"type": "heartbeat", "sid": sid, "tid": format!("t-{sid}"), "seq": seq, "ts": 0, "tilt": 0.0, "pwr": 0.92})
}

#[test]
fn every_endpoint_round_trips() {
    let server =
        ServerHandle::start(shared(CloudService::new(common::cloud_config(&["s1"]))), "127.0.0.1:0", None).unwrap();
    let c = Client::new(server.url());

    let (st, body) = c.post("/reports", 1_000, report(1, true));
    assert_eq!((st, body["applied"].clone()), (200, json!(true)));
    assert_eq!(c.post("/reports", 1_500, report(1, true)).1["applied"], json!(false));
    let (_, body) = c.post("/reports", 2_000, report(2, true));
    assert_eq!(body["effects"][0]["effect"], "order_opened");

    let (st, spaces) = c.get("/spaces");
    assert_eq!(st, 200);
    assert_eq!(spaces[0]["occ"], true);
    assert_eq!(spaces[0]["reason"], "visual");
    let (st, detail) = c.get("/spaces/s1");
    assert_eq!(st, 200);
    assert_eq!(detail["open_order"]["id"], "o000001");
    assert_eq!(c.get("/spaces/nope").0, 404);

    let (_, body) = c.post("/reports", 62_000, report(3, false));
    assert_eq!(body["effects"], json!([]));
    let (_, body) = c.post("/reports", 63_000, report(4, false));
    assert_eq!(body["effects"][0]["effect"], "order_closed");
    assert_eq!(body["effects"][0]["fee"], 0.1);
    let (_, orders) = c.get("/orders?space=s1");
    assert_eq!(orders.as_array().unwrap().len(), 1);
    assert_eq!(c.get("/orders?space=other").1, json!([]));

    assert_eq!(c.post("/heartbeats", 70_000, heartbeat("s2", 1)).1["applied"], true);
    let (_, nodes) = c.get("/nodes");
    assert_eq!(nodes.as_array().unwrap().len(), 1);
    assert_eq!(nodes[0]["status"], "online");
    let (st, body) = c.post("/sweep", 70_000 + 95_000, json!(null));
    assert_eq!(st, 200);
    assert_eq!(body["effects"][0]["kind"], "offline");
    assert_eq!(c.get("/nodes").1[0]["status"], "offline");

    let tilt = json!({"type": "alarm", "sid": "s1", "tid": "t-s1", "seq": 5, "ts": 0, "tilt": 26.0, "pwr": 0.92,
                      "akind": "tilt", "sev": "critical"});
    let (_, body) = c.post("/reports", 200_000, tilt);
    let id = body["effects"][0]["alarm_id"].as_str().unwrap().to_string();
    let (_, open) = c.get("/alarms?state=open");
    assert_eq!(open.as_array().unwrap().len(), 2);

    let (st, alarm) = c.post(&format!("/alarms/{id}/ack"), 201_000, json!({"operator": "kim"}));
    assert_eq!(st, 200);
    assert_eq!(alarm["state"], "acknowledged");
    assert_eq!(alarm["ack_by"], "kim");
    let (_, acked) = c.get("/alarms?state=acknowledged");
    assert_eq!(acked[0]["id"], id.as_str());
    let (st, alarm) = c.post(&format!("/alarms/{id}/resolve"), 202_000, json!({"operator": "kim"}));
    assert_eq!((st, alarm["state"].clone()), (200, json!("resolved")));
    assert_eq!(c.post(&format!("/alarms/{id}/resolve"), 203_000, json!({"operator": "kim"})).0, 409);
    assert_eq!(c.post("/alarms/a999999/ack", 0, json!({"operator": "kim"})).0, 404);

    let (_, m) = c.get("/metrics");
    assert_eq!(m["spaces"], 2);
    assert_eq!(m["orders_closed"], 1);
    assert_eq!(m["revenue"], 0.1);
    assert_eq!(m["open_alarms"], 1);
    server.stop().unwrap();
}

#[test]
fn bad_requests_are_rejected_and_counted() {
    let server =
        ServerHandle::start(shared(CloudService::new(common::cloud_config(&["s1"]))), "127.0.0.1:0", None).unwrap();
    let c = Client::new(server.url());
    assert_eq!(c.post("/reports", 0, json!({"type": "report"})).0, 400);
    assert_eq!(c.post("/reports", 0, heartbeat("s1", 1)).0, 400);
    assert_eq!(c.post("/heartbeats", 0, report(1, true)).0, 400);
    let mut unknown = report(1, true);
    unknown["sid"] = json!("ghost");
    assert_eq!(c.post("/reports", 0, unknown).0, 404);
    let mut foreign = report(1, true);
    foreign["tid"] = json!("t-other");
    assert_eq!(c.post("/reports", 0, foreign).0, 400);
    let mut extra = report(1, true);
    extra["x"] = json!(1);
    let (st, body) = c.post("/reports", 0, extra);
    assert_eq!(st, 400);
    assert!(body["error"].as_str().unwrap().contains("unexpected field"));
    assert_eq!(c.get("/metrics").1["counters"]["rejected"], 6);
    server.stop().unwrap();
}
