# ClassroomPeers Estimation Engine
