from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
from pydantic import BaseModel, Field, field_validator
from typing import List, Optional
import logging

import torch

from ehgcn.events import Event, event_sort_key, infer_sensor_dims, window_stream
from ehgcn.flops import estimate_flops
from ehgcn.hypergraph import build_hyperedges, motion_features
from ehgcn.poincare import Curvature, ManifoldPoint
from ehgcn.sampling import SampledStream, sample_windows
from ehgcn.schemas import (
    EventRecord,
    FlopReport,
    MvfConfig,
    NetworkConfig,
    SamplingConfig,
    WindowStats,
)

# Setup logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

app = FastAPI(title="ehgcn")


# Request/response models
class StreamRequest(BaseModel):
    events: List[EventRecord] = Field(..., description="Events in any order")
    window_us: int = Field(50_000, gt=0, description="Window length in microseconds")
    width: Optional[int] = Field(None, ge=1, description="Sensor width; inferred when omitted")
    height: Optional[int] = Field(None, ge=1, description="Sensor height; inferred when omitted")

    def to_events(self) -> List[Event]:
        return sorted((Event(e.x, e.y, e.t, e.p) for e in self.events), key=event_sort_key)

    def windows(self):
        events = self.to_events()
        inferred = infer_sensor_dims(events)
        return window_stream(events, self.window_us, (self.width or inferred[0], self.height or inferred[1]))


class SampleRequest(StreamRequest):
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)


class SampledWindow(BaseModel):
    t_start: int
    t_end: int
    num_events: int
    window_rate: float
    retained: List[EventRecord]


class SampleResponse(BaseModel):
    windows: List[SampledWindow]


class HypergraphRequest(StreamRequest):
    mvf: MvfConfig = Field(default_factory=MvfConfig)


class HypergraphWindow(BaseModel):
    t_start: int
    t_end: int
    num_vertices: int
    hyperedges: List[List[int]]


class HypergraphResponse(BaseModel):
    windows: List[HypergraphWindow]


class FlopsRequest(BaseModel):
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    stats: WindowStats


class PointPairRequest(BaseModel):
    x: List[float] = Field(..., description="First point on the ball")
    y: List[float] = Field(..., description="Second point on the ball")
    c: float = Field(1.0, description="Curvature magnitude")

    @field_validator('x', 'y')
    def validate_dims(cls, value):
        if not value:
            raise ValueError('points need at least one coordinate.')
        return value


class PointResponse(BaseModel):
    result: List[float] = Field(..., description="Resulting point")


class DistanceResponse(BaseModel):
    distance: float = Field(..., description="Hyperbolic distance")


class ErrorResponse(BaseModel):
    error: str = Field(..., description="Error message")


# Custom Exception Handlers
@app.exception_handler(HTTPException)
async def http_exception_handler(request: Request, exc: HTTPException):
    logger.error(f"HTTPException on {request.url.path}: {exc.detail}")
    return JSONResponse(
        status_code=exc.status_code,
        content={"error": exc.detail},
    )

@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    error_messages = "; ".join([f"{err['loc'][-1]}: {err['msg']}" for err in exc.errors()])
    logger.error(f"ValidationError on {request.url.path}: {error_messages}")
    return JSONResponse(
        status_code=400,
        content={"error": error_messages},
    )


# Health check endpoint
@app.get("/health")
async def health_check():
    return {"status": "healthy"}


@app.post("/sample", response_model=SampleResponse, responses={400: {"model": ErrorResponse}})
def sample_route(request: SampleRequest):
    try:
        streams = sample_windows(request.windows(), request.sampling)
    except ValueError as e:
        logger.error(f"Sample Error: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))
    return SampleResponse(windows=[
        SampledWindow(
            t_start=s.window.t_start,
            t_end=s.window.t_end,
            num_events=len(s.window),
            window_rate=s.window_rate,
            retained=[EventRecord(x=e.x, y=e.y, t=e.t, p=e.p) for e in s.retained],
        )
        for s in streams
    ])


@app.post("/hypergraph", response_model=HypergraphResponse, responses={400: {"model": ErrorResponse}})
def hypergraph_route(request: HypergraphRequest):
    windows = []
    try:
        for window in request.windows():
            stream = SampledStream.passthrough(window)
            graph = build_hyperedges(motion_features(stream), stream, request.mvf)
            windows.append(HypergraphWindow(
                t_start=window.t_start,
                t_end=window.t_end,
                num_vertices=graph.num_vertices,
                hyperedges=[list(edge) for edge in graph.hyperedges],
            ))
    except ValueError as e:
        logger.error(f"Hypergraph Error: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))
    return HypergraphResponse(windows=windows)


@app.post("/flops", response_model=FlopReport)
def flops_route(request: FlopsRequest):
    return estimate_flops(request.network, request.stats)


def _points(request: PointPairRequest):
    if len(request.x) != len(request.y):
        raise HTTPException(status_code=400, detail="points have different dimensions")
    try:
        c = Curvature(request.c)
        return ManifoldPoint(torch.tensor(request.x, dtype=torch.float64), c), ManifoldPoint(torch.tensor(request.y, dtype=torch.float64), c)
    except ValueError as e:
        logger.error(f"Geometry Error: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/geometry/mobius-add", response_model=PointResponse, responses={400: {"model": ErrorResponse}})
def mobius_add_route(request: PointPairRequest):
    x, y = _points(request)
    return PointResponse(result=x.mobius_add(y).tolist())


@app.post("/geometry/distance", response_model=DistanceResponse, responses={400: {"model": ErrorResponse}})
def distance_route(request: PointPairRequest):
    x, y = _points(request)
    return DistanceResponse(distance=x.distance(y))
