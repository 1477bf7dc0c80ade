use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use http_body_util::BodyExt;
use panosplat::server::{router, serve, AppState, Meta};
use panosplat_core::gaussians::{Splat, SplatSet};
use panosplat_core::geom::Vec3;
use panosplat_core::Pose;
use tower::ServiceExt;

fn state() -> Arc<AppState> {
    let splat = Splat {
        center: [0.0, 0.0, 2.0],
        rotation: [1.0, 0.0, 0.0, 0.0],
        scale: [0.3; 3],
        opacity: 0.9,
        color: [1.0, 0.2, 0.1],
    };
    let pose = Pose::from_translation(Vec3::new(0.1, 0.0, 0.0));
    Arc::new(AppState::new(
        SplatSet::from_splats(vec![splat]),
        0.1,
        10.0,
        pose,
        2,
    ))
}

async fn call(req: Request<Body>) -> (StatusCode, Option<String>, Vec<u8>) {
    let res = router(state(), None).oneshot(req).await.unwrap();
    let status = res.status();
    let ct = res
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, ct, body)
}

fn render_req(body: serde_json::Value) -> Request<Body> {
    Request::post("/api/render")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

const IDENTITY: [f64; 16] = [
    1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
];

#[tokio::test]
async fn meta_schema() {
    let (status, _, body) = call(Request::get("/api/meta").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let meta: Meta = serde_json::from_slice(&body).unwrap();
    assert_eq!(meta.splat_count, 1);
    assert_eq!((meta.near, meta.far), (0.1, 10.0));
    assert_eq!(meta.suggested_pose.len(), 16);
    assert_eq!(meta.suggested_pose[3], 0.1);
}

#[tokio::test]
async fn render_returns_png() {
    let (status, ct, body) = call(render_req(
        serde_json::json!({"c2w": IDENTITY, "width": 64, "mode": "erp"}),
    ))
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ct.as_deref(), Some("image/png"));
    let img = image::load_from_memory(&body).unwrap();
    assert_eq!((img.width(), img.height()), (64, 32));

    let req = serde_json::json!({"c2w": IDENTITY, "width": 32, "mode": "pinhole", "fov_deg": 60.0});
    let (status, _, body) = call(render_req(req)).await;
    assert_eq!(status, StatusCode::OK);
    let img = image::load_from_memory(&body).unwrap().into_rgb8();
    assert_eq!((img.width(), img.height()), (32, 32));
    // the splat sits straight ahead
    assert!(img.get_pixel(16, 16)[0] > 200);
}

async fn expect_400(body: Body) -> String {
    let req = Request::post("/api/render")
        .header(header::CONTENT_TYPE, "application/json")
        .body(body)
        .unwrap();
    let (status, ct, body) = call(req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(ct.as_deref(), Some("application/json"));
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    v["error"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn bad_requests_are_400_with_json() {
    let mut skew = IDENTITY;
    skew[0] = 1.5;
    let err = expect_400(Body::from(
        serde_json::json!({"c2w": skew, "width": 64, "mode": "erp"}).to_string(),
    ))
    .await;
    assert!(err.contains("orthonormal"), "{err}");
    let err = expect_400(Body::from(
        serde_json::json!({"c2w": [1.0], "width": 64, "mode": "erp"}).to_string(),
    ))
    .await;
    assert!(err.contains("16"), "{err}");
    let err = expect_400(Body::from(
        serde_json::json!({"c2w": IDENTITY, "width": 64, "mode": "fisheye"}).to_string(),
    ))
    .await;
    assert!(err.contains("mode"), "{err}");
    let err = expect_400(Body::from(
        serde_json::json!({"c2w": IDENTITY, "width": 62, "mode": "erp"}).to_string(),
    ))
    .await;
    assert!(err.contains("multiple of 4"), "{err}");
    let err = expect_400(Body::from(
        serde_json::json!({"c2w": IDENTITY, "width": 64, "mode": "pinhole", "fov_deg": 190})
            .to_string(),
    ))
    .await;
    assert!(err.contains("fov"), "{err}");
    expect_400(Body::from("{not json")).await;
}

#[tokio::test]
async fn index_is_served() {
    let (status, _, body) = call(Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/render"));
}

#[tokio::test]
async fn static_dir_is_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "viewer").unwrap();
    let app = router(state(), Some(dir.path().to_path_buf()));
    let res = app
        .oneshot(Request::get("/").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(
        &res.into_body().collect().await.unwrap().to_bytes()[..],
        b"viewer"
    );
}

#[tokio::test]
async fn busy_port_is_a_startup_error() {
    let taken = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = taken.local_addr().unwrap();
    let err = serve(addr, state(), None).await.unwrap_err().to_string();
    assert!(err.contains("cannot listen"), "{err}");
}
